use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{estimate_maps, temporal_coherence, CoherenceMap, MapEstimate};
use crate::insar::{simulate, streams, sub_seed, InSARGeometry, Map2, ParameterMaps};
use crate::metrics::{residual_stats, EvalSummary};
use crate::pipeline::config::PipelineConfig;
use crate::pipeline::tiling::{decompose_tiled, plan_patches, Method, PatchOutcome, PatchRect};
use crate::report::{render_map, summary_to_csv, write_curves_svg, write_map_csv, RenderOptions, Series, SummaryRow};
use crate::tensor::{read_ct3, write_ct3, ComplexTensor3};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative to the output directory for outputs; as given for inputs.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub noise: u64,
    pub outliers: u64,
    pub truth: u64,
    pub baselines: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            noise: sub_seed(master, streams::NOISE),
            outliers: sub_seed(master, streams::OUTLIERS),
            truth: sub_seed(master, streams::TRUTH),
            baselines: sub_seed(master, streams::BASELINES),
        }
    }
}

/// Compact per-patch solver record; full iteration histories go to
/// `<method>_solver.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub rect: PatchRect,
    pub iterations: usize,
    pub final_primal_residual: f64,
    pub converged: bool,
    pub gamma: f64,
    pub failure: Option<String>,
}

impl PatchSummary {
    fn from_outcome(o: &PatchOutcome) -> Self {
        let (iterations, residual, converged, gamma) = match &o.report {
            Some(r) => (r.iterations, r.final_primal_residual(), r.converged, r.gamma),
            None => (0, 0.0, o.failure.is_none(), 0.0),
        };
        Self { rect: o.rect, iterations, final_primal_residual: residual, converged, gamma, failure: o.failure.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub patches: Vec<PatchSummary>,
    pub evaluation: Option<EvalSummary>,
    pub mean_coherence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed { stage: String, error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config: PipelineConfig,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seeds: Option<Seeds>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub methods: Vec<MethodRun>,
    pub timings: Vec<StageTiming>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn output(&self, name: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.name == name)
    }

    /// `(name, sha256)` of every output, in write order.
    pub fn checksums(&self) -> Vec<(&str, &str)> {
        self.outputs.iter().map(|a| (a.name.as_str(), a.sha256.as_str())).collect()
    }

    pub fn method(&self, m: Method) -> Option<&MethodRun> {
        self.methods.iter().find(|r| r.method == m)
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Runner {
    cfg: PipelineConfig,
    base: PathBuf,
    out: PathBuf,
    manifest: RunManifest,
}

struct Data {
    stack: Option<ComplexTensor3>,
    geometry: Option<InSARGeometry>,
    truth: Option<ParameterMaps>,
    filtered: Vec<(Method, ComplexTensor3)>,
    estimates: Vec<(Method, MapEstimate, CoherenceMap)>,
}

impl Runner {
    fn record(&mut self, name: &str, file: &str) -> Result<()> {
        let (sha256, bytes) = sha256_file(&self.out.join(file))?;
        self.manifest.outputs.push(Artifact { name: name.into(), path: file.into(), sha256, bytes });
        Ok(())
    }

    fn write_map(&mut self, file: &str, map: &Map2, quantity: &str, units: &str) -> Result<()> {
        write_map_csv(&self.out.join(file), map, quantity, units)?;
        self.record(file, file)
    }

    fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let path = self.out.join(file);
        let text = serde_json::to_string_pretty(value).expect("serializable");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(file, file)
    }

    fn input(&mut self, name: &str, p: &Path) -> Result<PathBuf> {
        let path = resolve(&self.base, p);
        let (sha256, bytes) = sha256_file(&path)?;
        self.manifest.inputs.push(Artifact { name: name.into(), path: path.clone(), sha256, bytes });
        Ok(path)
    }

    fn simulate(&mut self, d: &mut Data) -> Result<()> {
        let spec = self.cfg.simulation.spec()?;
        self.manifest.seeds = Some(Seeds::from_master(spec.rng_seed));
        let sim = simulate(&spec)?;
        write_ct3(self.out.join("stack.ct3"), &sim.stack)?;
        self.record("stack.ct3", "stack.ct3")?;
        self.write_json("geometry.json", &spec.geometry)?;
        self.write_map("truth_elevation.csv", &sim.truth.elevation, "elevation", "m")?;
        self.write_map("truth_deformation.csv", &sim.truth.deformation, "deformation", "mm")?;
        d.stack = Some(sim.stack);
        d.geometry = Some(spec.geometry);
        d.truth = Some(sim.truth);
        Ok(())
    }

    fn load_inputs(&mut self, d: &mut Data) -> Result<()> {
        let input = self.cfg.input.clone();
        if d.stack.is_none() {
            if let Some(p) = &input.stack {
                d.stack = Some(read_ct3(self.input("stack", p)?)?);
            }
        }
        if d.geometry.is_none() {
            if let Some(p) = &input.geometry {
                let path = self.input("geometry", p)?;
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let g: InSARGeometry =
                    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                g.validate()?;
                d.geometry = Some(g);
            }
        }
        if d.truth.is_none() {
            if let (Some(e), Some(p)) = (&input.truth_elevation, &input.truth_deformation) {
                let e = crate::report::read_map_csv(&self.input("truth_elevation", e)?)?;
                let p = crate::report::read_map_csv(&self.input("truth_deformation", p)?)?;
                d.truth = Some(ParameterMaps::new(e, p)?);
            }
        }
        Ok(())
    }

    fn decompose(&mut self, d: &mut Data) -> Result<()> {
        let stack = d.stack.as_ref().expect("validated: stack available");
        let [rows, cols, _] = stack.dims();
        let t = &self.cfg.tiling;
        let layout = plan_patches((rows, cols), t.patch_h, t.patch_w, t.overlap)?;
        for method in self.cfg.decomposition.methods.clone() {
            let cfg = self.cfg.solver_for(method).clone();
            let tiled = decompose_tiled(stack, &layout, &cfg, method, self.cfg.decomposition.workers)?;
            if method != Method::None {
                let x = format!("{method}_x.ct3");
                let e = format!("{method}_e.ct3");
                write_ct3(self.out.join(&x), &tiled.x_hat)?;
                self.record(&x, &x)?;
                write_ct3(self.out.join(&e), &tiled.e_hat)?;
                self.record(&e, &e)?;
                self.write_json(&format!("{method}_solver.json"), &tiled.patches)?;
            }
            let failed = tiled.failed_patches();
            if failed > 0 {
                log::warn!("{method}: {failed} of {} patches passed through unfiltered", tiled.patches.len());
            }
            self.manifest.methods.push(MethodRun {
                method,
                patches: tiled.patches.iter().map(PatchSummary::from_outcome).collect(),
                evaluation: None,
                mean_coherence: None,
            });
            d.filtered.push((method, tiled.x_hat));
        }
        Ok(())
    }

    fn estimate(&mut self, d: &mut Data) -> Result<()> {
        let geom = d.geometry.as_ref().expect("validated: geometry available");
        for (method, x) in &d.filtered {
            let est = estimate_maps(x, geom, &self.cfg.estimation)?;
            let coh = temporal_coherence(x, &est.maps, geom)?;
            self.write_map(&format!("{method}_elevation.csv"), &est.maps.elevation, "elevation", "m")?;
            self.write_map(&format!("{method}_deformation.csv"), &est.maps.deformation, "deformation", "mm")?;
            self.write_map(&format!("{method}_coherence.csv"), &coh.0, "temporal_coherence", "1")?;
            if let Some(run) = self.manifest.methods.iter_mut().find(|r| r.method == *method) {
                run.mean_coherence = Some(coh.mean());
            }
            d.estimates.push((*method, est, coh));
        }
        Ok(())
    }

    fn evaluate(&mut self, d: &Data) -> Result<()> {
        let truth = d.truth.as_ref().expect("validated: truth available");
        let bins = self.cfg.report.coherence_bins;
        let mut rows = Vec::new();
        let mut hist_csv = String::from("method,bin_lo,bin_hi,count,pdf\n");
        for (method, est, coh) in &d.estimates {
            let summary = residual_stats(&est.maps, truth, &est.valid)?.with_coherence(coh, &est.valid, bins)?;
            let h = summary.coherence_histogram.clone().expect("attached above");
            for ((e, c), p) in h.edges.windows(2).zip(&h.counts).zip(h.pdf()) {
                hist_csv.push_str(&format!("{method},{:.6},{:.6},{c},{p:.6}\n", e[0], e[1]));
            }
            rows.push(SummaryRow {
                method: method.to_string(),
                summary: summary.clone(),
                mean_coherence: Some(coh.mean()),
            });
            if let Some(run) = self.manifest.methods.iter_mut().find(|r| r.method == *method) {
                run.evaluation = Some(summary);
            }
        }
        let path = self.out.join("summary.csv");
        fs::write(&path, summary_to_csv(&rows)).map_err(|e| Error::io(&path, e))?;
        self.record("summary.csv", "summary.csv")?;
        let path = self.out.join("coherence_histogram.csv");
        fs::write(&path, hist_csv).map_err(|e| Error::io(&path, e))?;
        self.record("coherence_histogram.csv", "coherence_histogram.csv")
    }

    fn render(&mut self, d: &Data) -> Result<()> {
        let rc = self.cfg.report.clone();
        let opts = |label: &str, range: Option<[f64; 2]>| RenderOptions {
            palette: rc.palette,
            range,
            block: rc.block,
            label: label.into(),
        };
        let truth_ranges = d.truth.as_ref().map(|t| {
            let r = |m: &Map2| {
                let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                [lo, hi]
            };
            (r(&t.elevation), r(&t.deformation))
        });
        let mut jobs: Vec<(String, Map2, Option<Vec<bool>>, RenderOptions)> = Vec::new();
        if let Some(t) = &d.truth {
            let (re, rd) = truth_ranges.expect("truth present");
            jobs.push(("truth_elevation".into(), t.elevation.clone(), None, opts("elevation [m]", Some(re))));
            jobs.push(("truth_deformation".into(), t.deformation.clone(), None, opts("deformation [mm]", Some(rd))));
        }
        for (method, est, coh) in &d.estimates {
            let (re, rd) = match truth_ranges {
                Some((a, b)) => (Some(a), Some(b)),
                None => (None, None),
            };
            let valid = Some(est.valid.clone());
            jobs.push((
                format!("{method}_elevation"),
                est.maps.elevation.clone(),
                valid.clone(),
                opts("elevation [m]", re),
            ));
            jobs.push((
                format!("{method}_deformation"),
                est.maps.deformation.clone(),
                valid.clone(),
                opts("deformation [mm]", rd),
            ));
            jobs.push((
                format!("{method}_coherence"),
                coh.0.clone(),
                valid,
                opts("temporal coherence", Some([0.0, 1.0])),
            ));
        }
        for (stem, map, valid, o) in jobs {
            let file = format!("{stem}.ppm");
            let rendered = render_map(&map, valid.as_deref(), &o, &self.out.join(&file))?;
            self.record(&file, &file)?;
            let bar = rendered.colorbar.file_name().expect("file name").to_string_lossy().into_owned();
            self.record(&bar, &bar)?;
        }
        if self.cfg.stages.evaluate {
            let series: Vec<Series> = self
                .manifest
                .methods
                .iter()
                .filter_map(|run| {
                    let h = run.evaluation.as_ref()?.coherence_histogram.as_ref()?;
                    let pts = h.edges.windows(2).zip(h.pdf()).map(|(e, p)| (0.5 * (e[0] + e[1]), p)).collect();
                    Some(Series { name: run.method.to_string(), points: pts })
                })
                .collect();
            if !series.is_empty() {
                let file = "coherence_pdf.svg";
                write_curves_svg(&self.out.join(file), "Temporal coherence", "coherence", "PDF", &series)?;
                self.record(file, file)?;
            }
        }
        Ok(())
    }

    fn stage<F>(&mut self, name: &str, d: &mut Data, f: F) -> Result<()>
    where
        F: FnOnce(&mut Self, &mut Data) -> Result<()>,
    {
        log::info!("stage {name}");
        let t = Instant::now();
        let res = f(self, d);
        self.manifest.timings.push(StageTiming { stage: name.into(), seconds: t.elapsed().as_secs_f64() });
        if let Err(e) = &res {
            self.manifest.status = RunStatus::Failed { stage: name.into(), error: e.to_string() };
        }
        res
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, self.manifest.to_json()).map_err(|e| Error::io(&path, e))
    }
}

/// Loads `config_path` and runs [`run_pipeline_with`] with paths resolved
/// against the config file's directory.
pub fn run_pipeline(config_path: &Path) -> Result<RunManifest> {
    let cfg = PipelineConfig::load(config_path)?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_pipeline_with(cfg, &base, Some(config_path))
}

/// Runs the enabled stages and writes all artifacts plus `manifest.json` into
/// the output directory. When a stage fails, the manifest written so far is
/// saved with a failed status before the error is returned.
pub fn run_pipeline_with(cfg: PipelineConfig, base: &Path, config_path: Option<&Path>) -> Result<RunManifest> {
    cfg.validate()?;
    let out = resolve(base, cfg.output_dir.as_deref().unwrap_or(Path::new("out")));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        config_path: config_path.map(Path::to_path_buf),
        output_dir: out.clone(),
        seeds: None,
        inputs: Vec::new(),
        outputs: Vec::new(),
        methods: Vec::new(),
        timings: Vec::new(),
        status: RunStatus::Running,
    };
    let mut runner = Runner { cfg, base: base.to_path_buf(), out, manifest };
    let mut data = Data { stack: None, geometry: None, truth: None, filtered: Vec::new(), estimates: Vec::new() };
    let stages = runner.cfg.stages.clone();
    let result = (|| {
        if stages.simulate {
            runner.stage("simulate", &mut data, Runner::simulate)?;
        }
        runner.stage("load", &mut data, Runner::load_inputs)?;
        if stages.decompose {
            runner.stage("decompose", &mut data, Runner::decompose)?;
        }
        if stages.estimate {
            runner.stage("estimate", &mut data, Runner::estimate)?;
        }
        if stages.evaluate {
            runner.stage("evaluate", &mut data, |r, d| r.evaluate(d))?;
        }
        if stages.render {
            runner.stage("render", &mut data, |r, d| r.render(d))?;
        }
        Ok(())
    })();
    if result.is_ok() {
        runner.manifest.status = RunStatus::Completed;
    }
    runner.write_manifest()?;
    result.map(|()| runner.manifest)
}
