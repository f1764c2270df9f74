//! End-to-end pipelines, sweeps and artifact persistence.

mod config;
mod pipeline;
mod render;
mod sweep;

pub use config::{DataSource, ExperimentConfig, CONFIG_VERSION};
pub use pipeline::{
    load_data, run_pipeline, Evaluation, RunOptions, RunRecord, Stage, StageTiming, ATTACK_FILE,
    CONFIG_FILE, EVAL_FILE, GROUND_TRUTH_FILE, MANIFEST_FILE, MAP_FILE, MASK_FILE,
    PARAMS_FULL_FILE, PARAMS_SELECTED_FILE, RUN_FILE, SPLIT_FILE, TIMINGS_FILE, TRACE_FILE,
};
pub use render::{palette, render_map, MAX_PALETTE_CLASSES};
pub use sweep::{
    patch_sweep, repeat_dir, robustness_sweep, PatchSweep, RobustnessSweep, PATCH_SWEEP_STEM,
    ROBUST_CLEAN_STEM, ROBUST_FILE, ROBUST_STEM,
};
