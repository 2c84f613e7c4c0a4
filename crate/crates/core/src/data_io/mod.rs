//! Cube, label-map and checkpoint I/O, plus synthetic scene generation.

mod checkpoint;
mod hsi;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MAGIC, VERSION};
pub use hsi::{
    load_dataset, load_ground_truth, load_hsi, save_dataset, save_ground_truth, save_hsi,
    GroundTruth, HyperspectralImage, RawHeader, RawType, CUBE_DATA, CUBE_HEADER, GT_DATA,
    GT_HEADER,
};
pub use synth::{synth_hsi, ClassLayout, SynthConfig, MIN_CLASS_PIXELS};
