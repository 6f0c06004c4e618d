//! Sliding-window decomposition of large stacks and the end-to-end
//! simulate → decompose → estimate → evaluate → render pipeline.

mod config;
mod run;
mod tiling;

pub use config::{
    DecompositionConfig, InputConfig, PipelineConfig, ReportConfig, SimulationConfig, Stages, TilingConfig,
};
pub use run::{
    run_pipeline, run_pipeline_with, sha256_file, Artifact, MethodRun, PatchSummary, RunManifest, RunStatus, Seeds,
    StageTiming, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use tiling::{
    decompose_tiled, extract_patch, plan_patches, Method, PatchLayout, PatchOutcome, PatchRect, TiledDecomposition,
    MIN_PATCH,
};
