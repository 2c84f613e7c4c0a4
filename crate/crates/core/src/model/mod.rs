//! The two-level graph network: attention-weighted local convolution over
//! two hop neighborhoods, a global convolution over an adjacency rebuilt from
//! the local output, and their learned fusion.

mod forward;
mod params;

pub use forward::{
    classification_loss, forward, forward_on_tape, fuse, global_forward, local_layer, local_output,
    total_loss, Forward, ForwardOutput, Losses, Supervision,
};
pub use params::{
    LayerParams, ModelConfig, ModelParams, ParamVars, BRANCHES, LAYERS, ZETA_RAW_INIT,
};
