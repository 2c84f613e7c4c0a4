//! End-to-end runs: data preparation, training, assessment, multi-seed
//! summaries, parameter sweeps, and the files each run leaves behind.

mod config;
mod run;

pub use config::{
    resolved_region_count, EvalLevel, ModelSettings, RunConfig, SegmentationSettings,
};
pub use run::*;
