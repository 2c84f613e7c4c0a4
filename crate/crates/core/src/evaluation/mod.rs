//! Accuracy metrics and classification maps.

mod metrics;
mod render;

pub use metrics::{evaluate, evaluate_confusion, pixel_eval_pairs, EvalReport};
pub use render::{pixel_expand, region_majority, render_map, render_ppm, Palette};
