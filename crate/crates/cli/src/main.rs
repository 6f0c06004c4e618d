use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvlr_core::estimation::{estimate_maps, temporal_coherence};
use tvlr_core::insar::{InSARGeometry, ParameterMaps};
use tvlr_core::metrics::residual_stats;
use tvlr_core::pipeline::{
    decompose_tiled, plan_patches, run_pipeline_with, Method, PipelineConfig, RunManifest, RunStatus, Stages,
    MANIFEST_FILE,
};
use tvlr_core::report::{read_map_csv, summary_to_csv, write_map_csv, SummaryRow};
use tvlr_core::tensor::{read_ct3, write_ct3};
use tvlr_core::Error;

#[derive(Parser)]
#[command(name = "tvlr", version, about = "TV-regularized robust low-rank filtering of InSAR stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a stack with truth maps and geometry.
    Simulate(Common),
    /// Filter a stack, writing the low-rank and outlier components.
    Decompose {
        #[command(flatten)]
        common: Common,
        /// Input stack (CT3); defaults to `input.stack` from the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Periodogram estimation of elevation and deformation maps.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Acquisition geometry (JSON); defaults to `input.geometry`.
        #[arg(long)]
        geometry: Option<PathBuf>,
    },
    /// Residual statistics of estimated maps against truth maps.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        elevation: PathBuf,
        #[arg(long)]
        deformation: PathBuf,
        #[arg(long)]
        truth_elevation: Option<PathBuf>,
        #[arg(long)]
        truth_deformation: Option<PathBuf>,
        /// Label for the summary row.
        #[arg(long, default_value = "estimate")]
        label: String,
    },
    /// Run the configured stages end to end.
    Pipeline(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Fixed outlier weight instead of the per-patch default.
    #[arg(long)]
    gamma: Option<f64>,
    /// Patch size as `<H>x<W>`.
    #[arg(long, value_parser = parse_patch)]
    patch: Option<(usize, usize)>,
    #[arg(long)]
    overlap: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["tvlr", "lr", "none"])]
    method: Option<String>,
}

fn parse_patch(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected <H>x<W>, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad patch size {v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

impl Common {
    fn method(&self) -> Result<Option<Method>, Error> {
        self.method.as_deref().map(str::parse).transpose()
    }

    /// Loads the config (or defaults) and applies command-line overrides.
    /// Returns the config and the directory relative paths resolve against.
    fn load(&self) -> Result<(PipelineConfig, PathBuf), Error> {
        let (mut cfg, base) = match &self.config {
            Some(p) => (PipelineConfig::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (PipelineConfig::default(), PathBuf::new()),
        };
        let method = self.method()?;
        for solver in [Some(&mut cfg.solver), cfg.lr_solver.as_mut()].into_iter().flatten() {
            if let Some(a) = self.alpha {
                solver.alpha = a;
            }
            if let Some(b) = self.beta {
                solver.beta = b;
            }
            if self.gamma.is_some() {
                solver.gamma = self.gamma;
            }
        }
        if let Some((h, w)) = self.patch {
            cfg.tiling.patch_h = h;
            cfg.tiling.patch_w = w;
        }
        if let Some(o) = self.overlap {
            cfg.tiling.overlap = o;
        }
        if let Some(w) = self.workers {
            cfg.decomposition.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(m) = method {
            cfg.decomposition.methods = if m == Method::None { vec![m] } else { vec![Method::None, m] };
        }
        let mut base = base;
        if let Some(out) = &self.out {
            let cwd = std::env::current_dir().map_err(|e| Error::Config(format!("current directory: {e}")))?;
            cfg.output_dir = Some(cwd.join(out));
        } else if self.config.is_none() {
            base = std::env::current_dir().map_err(|e| Error::Config(format!("current directory: {e}")))?;
        }
        cfg.validate()?;
        Ok((cfg, base))
    }
}

fn out_dir(cfg: &PipelineConfig, base: &Path) -> Result<PathBuf, Error> {
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out = if out.is_absolute() { out } else { base.join(out) };
    fs::create_dir_all(&out).map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn resolve(base: &Path, cli: Option<&PathBuf>, cfg: Option<&PathBuf>, what: &str) -> Result<PathBuf, Error> {
    match (cli, cfg) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(p)) if p.is_absolute() => Ok(p.clone()),
        (None, Some(p)) => Ok(base.join(p)),
        (None, None) => Err(Error::Config(format!("no {what} given (flag or config input section)"))),
    }
}

fn read_geometry(path: &Path) -> Result<InSARGeometry, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let g: InSARGeometry =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    g.validate()?;
    Ok(g)
}

/// Outcome of a command: numerical fallbacks are reported but artifacts are still written.
enum Done {
    Ok,
    Degraded(String),
}

fn run_stages(common: &Common, stages: Stages) -> Result<Done, Error> {
    let (mut cfg, base) = common.load()?;
    cfg.stages = stages;
    cfg.validate()?;
    let manifest = run_pipeline_with(cfg, &base, common.config.as_deref())?;
    report_manifest(&manifest)
}

fn report_manifest(m: &RunManifest) -> Result<Done, Error> {
    let summary = m.output_dir.join("summary.csv");
    if let Ok(text) = fs::read_to_string(&summary) {
        print!("{text}");
    }
    println!("manifest: {}", m.output_dir.join(MANIFEST_FILE).display());
    if let RunStatus::Failed { stage, error } = &m.status {
        return Ok(Done::Degraded(format!("stage {stage} failed: {error}")));
    }
    let failed: usize = m.methods.iter().map(|r| r.patches.iter().filter(|p| p.failure.is_some()).count()).sum();
    if failed > 0 {
        return Ok(Done::Degraded(format!("{failed} patch solve(s) failed and were passed through")));
    }
    Ok(Done::Ok)
}

fn decompose(common: &Common, input: Option<&PathBuf>) -> Result<Done, Error> {
    let (cfg, base) = common.load()?;
    let method = common.method()?.unwrap_or(Method::Tvlr);
    let stack = read_ct3(resolve(&base, input, cfg.input.stack.as_ref(), "input stack")?)?;
    let [rows, cols, _] = stack.dims();
    let t = &cfg.tiling;
    let layout = plan_patches((rows, cols), t.patch_h, t.patch_w, t.overlap)?;
    let tiled = decompose_tiled(&stack, &layout, cfg.solver_for(method), method, cfg.decomposition.workers)?;
    let out = out_dir(&cfg, &base)?;
    write_ct3(out.join(format!("{method}_x.ct3")), &tiled.x_hat)?;
    write_ct3(out.join(format!("{method}_e.ct3")), &tiled.e_hat)?;
    let reports = out.join(format!("{method}_solver.json"));
    fs::write(&reports, serde_json::to_string_pretty(&tiled.patches).expect("serializable"))
        .map_err(|e| Error::Config(format!("{}: {e}", reports.display())))?;
    for p in &tiled.patches {
        if let Some(r) = &p.report {
            println!(
                "patch ({}, {}) {}x{}: {} iterations, residual {:.3e}, gamma {:.6}",
                p.rect.row0,
                p.rect.col0,
                p.rect.rows,
                p.rect.cols,
                r.iterations,
                r.final_primal_residual(),
                r.gamma
            );
        }
    }
    match tiled.failed_patches() {
        0 => Ok(Done::Ok),
        n => Ok(Done::Degraded(format!("{n} patch solve(s) failed and were passed through"))),
    }
}

fn estimate(common: &Common, input: Option<&PathBuf>, geometry: Option<&PathBuf>) -> Result<Done, Error> {
    let (cfg, base) = common.load()?;
    let stack = read_ct3(resolve(&base, input, cfg.input.stack.as_ref(), "input stack")?)?;
    let geom = read_geometry(&resolve(&base, geometry, cfg.input.geometry.as_ref(), "geometry")?)?;
    let est = estimate_maps(&stack, &geom, &cfg.estimation)?;
    let coh = temporal_coherence(&stack, &est.maps, &geom)?;
    let out = out_dir(&cfg, &base)?;
    write_map_csv(&out.join("elevation.csv"), &est.maps.elevation, "elevation", "m")?;
    write_map_csv(&out.join("deformation.csv"), &est.maps.deformation, "deformation", "mm")?;
    write_map_csv(&out.join("coherence.csv"), &coh.0, "temporal_coherence", "1")?;
    println!("mean temporal coherence {:.6}", coh.mean());
    Ok(Done::Ok)
}

fn evaluate(
    common: &Common,
    est: (&Path, &Path),
    truth: (Option<&PathBuf>, Option<&PathBuf>),
    label: &str,
) -> Result<Done, Error> {
    let (cfg, base) = common.load()?;
    let maps = ParameterMaps::new(read_map_csv(est.0)?, read_map_csv(est.1)?)?;
    let te = resolve(&base, truth.0, cfg.input.truth_elevation.as_ref(), "truth elevation")?;
    let td = resolve(&base, truth.1, cfg.input.truth_deformation.as_ref(), "truth deformation")?;
    let reference = ParameterMaps::new(read_map_csv(&te)?, read_map_csv(&td)?)?;
    let (rows, cols) = maps.shape();
    let summary = residual_stats(&maps, &reference, &vec![true; rows * cols])?;
    let row = SummaryRow { method: label.to_string(), summary: summary.clone(), mean_coherence: None };
    let csv = summary_to_csv(&[row]);
    let out = out_dir(&cfg, &base)?;
    let path = out.join("summary.csv");
    fs::write(&path, &csv).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let path = out.join("evaluation.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("serializable"))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    print!("{csv}");
    Ok(Done::Ok)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        Error::Numerical { .. } | Error::SvdFailure { .. } => 3,
        Error::Format(_) | Error::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let only = |f: fn(&mut Stages)| {
        let mut s = Stages { simulate: false, decompose: false, estimate: false, evaluate: false, render: false };
        f(&mut s);
        s
    };
    let result = match &cli.command {
        Command::Simulate(c) => run_stages(c, only(|s| s.simulate = true)),
        Command::Decompose { common, input } => decompose(common, input.as_ref()),
        Command::Estimate { common, input, geometry } => estimate(common, input.as_ref(), geometry.as_ref()),
        Command::Evaluate { common, elevation, deformation, truth_elevation, truth_deformation, label } => {
            evaluate(common, (elevation, deformation), (truth_elevation.as_ref(), truth_deformation.as_ref()), label)
        }
        Command::Pipeline(c) => c.load().and_then(|(cfg, _)| run_stages(c, cfg.stages)),
    };
    match result {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Degraded(msg)) => {
            eprintln!("tvlr: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("tvlr: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
