//! Superpixel segmentation and region-graph construction.

mod regions;
mod slic;

pub use regions::{hop_neighborhoods, region_features, region_labels, RegionGraph};
pub use slic::{
    default_region_count, slic_segment, SegmentationMap, SlicConfig, DEFAULT_COMPACTNESS,
    DEFAULT_SLIC_ITERS,
};
