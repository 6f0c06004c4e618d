use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::SearchGrid;
use crate::insar::{BaselineSpec, SimSpec, TruthSpec};
use crate::pipeline::tiling::Method;
use crate::report::Palette;
use crate::solver::SolverConfig;

/// Top-level pipeline configuration, read from TOML. Every table and field is
/// optional; see `docs/config.md` for the schema.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Artifact directory, relative to the config file. Defaults to `out`.
    pub output_dir: Option<PathBuf>,
    pub stages: Stages,
    pub simulation: SimulationConfig,
    pub input: InputConfig,
    pub decomposition: DecompositionConfig,
    /// Parameters for `tvlr`.
    pub solver: SolverConfig,
    /// Parameters for `lr`; falls back to `solver` when absent.
    pub lr_solver: Option<SolverConfig>,
    pub tiling: TilingConfig,
    pub estimation: SearchGrid,
    pub report: ReportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub simulate: bool,
    pub decompose: bool,
    pub estimate: bool,
    pub evaluate: bool,
    pub render: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self { simulate: true, decompose: true, estimate: true, evaluate: true, render: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub snr_db: f64,
    pub outlier_fraction: f64,
    pub baselines: BaselineSpec,
    pub truth: TruthSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            rows: 60,
            cols: 75,
            snr_db: 0.0,
            outlier_fraction: 0.2,
            baselines: BaselineSpec::default(),
            truth: TruthSpec::default(),
        }
    }
}

impl SimulationConfig {
    pub fn spec(&self) -> Result<SimSpec> {
        SimSpec::generated(
            self.rows,
            self.cols,
            &self.baselines,
            &self.truth,
            self.snr_db,
            self.outlier_fraction,
            self.seed,
        )
    }
}

/// Existing artifacts used when `stages.simulate` is off. Relative paths are
/// resolved against the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub stack: Option<PathBuf>,
    /// JSON-serialized acquisition geometry.
    pub geometry: Option<PathBuf>,
    pub truth_elevation: Option<PathBuf>,
    pub truth_deformation: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    /// Methods to run, each producing its own set of artifacts. `none` is the
    /// unfiltered stack.
    pub methods: Vec<Method>,
    /// Worker threads for patch solves; `0` uses all cores.
    pub workers: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self { methods: vec![Method::None, Method::Tvlr], workers: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    pub overlap: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self { patch_h: 100, patch_w: 100, overlap: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub coherence_bins: usize,
    /// Pixel block size for rendered maps.
    pub block: usize,
    pub palette: Palette,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { coherence_bins: 20, block: 4, palette: Palette::default() }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::Config(msg),
        other => other,
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn lr_solver(&self) -> &SolverConfig {
        self.lr_solver.as_ref().unwrap_or(&self.solver)
    }

    pub fn solver_for(&self, method: Method) -> &SolverConfig {
        match method {
            Method::Lr => self.lr_solver(),
            _ => &self.solver,
        }
    }

    /// Checks parameter ranges and stage dependencies. All failures are
    /// reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        self.solver.validate().map_err(config_err)?;
        if let Some(lr) = &self.lr_solver {
            lr.validate().map_err(config_err)?;
        }
        self.estimation.validate().map_err(config_err)?;
        let sim = &self.simulation;
        if sim.rows == 0 || sim.cols == 0 {
            return fail("simulation grid must be non-empty");
        }
        if !(0.0..=1.0).contains(&sim.outlier_fraction) {
            return fail("simulation.outlier_fraction must lie in [0, 1]");
        }
        if sim.snr_db.is_nan() {
            return fail("simulation.snr_db must be a number");
        }
        let t = &self.tiling;
        crate::pipeline::plan_patches((t.patch_h.max(1), t.patch_w.max(1)), t.patch_h, t.patch_w, t.overlap)
            .map_err(config_err)?;
        if self.report.coherence_bins < 2 {
            return fail("report.coherence_bins must be >= 2");
        }
        if self.report.block == 0 {
            return fail("report.block must be >= 1");
        }
        let s = &self.stages;
        let has_stack = s.simulate || self.input.stack.is_some();
        let has_geometry = s.simulate || self.input.geometry.is_some();
        let has_truth = s.simulate || (self.input.truth_elevation.is_some() && self.input.truth_deformation.is_some());
        if s.decompose && !has_stack {
            return fail("decompose needs either stages.simulate or input.stack");
        }
        if s.decompose && self.decomposition.methods.is_empty() {
            return fail("decomposition.methods is empty");
        }
        let mut seen = Vec::new();
        for m in &self.decomposition.methods {
            if seen.contains(m) {
                return fail(&format!("method {m} listed twice"));
            }
            seen.push(*m);
        }
        if s.estimate && !s.decompose {
            return fail("estimate needs stages.decompose");
        }
        if s.estimate && !has_geometry {
            return fail("estimate needs either stages.simulate or input.geometry");
        }
        if s.evaluate && !s.estimate {
            return fail("evaluate needs stages.estimate");
        }
        if s.evaluate && !has_truth {
            return fail("evaluate needs truth maps (stages.simulate or input.truth_*)");
        }
        if s.render && !s.estimate {
            return fail("render needs stages.estimate");
        }
        Ok(())
    }
}
