use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_learning::DEFAULT_BETA;
use crate::model::ModelConfig;
use crate::segmentation::{default_region_count, DEFAULT_COMPACTNESS, DEFAULT_SLIC_ITERS};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSettings {
    /// Target region count; `None` until resolved against the data.
    pub n_regions: Option<usize>,
    pub compactness: f64,
    pub max_iters: usize,
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        Self {
            n_regions: None,
            compactness: DEFAULT_COMPACTNESS,
            max_iters: DEFAULT_SLIC_ITERS,
        }
    }
}

/// Architecture settings that do not depend on the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: usize,
    pub hops: [usize; 2],
    pub beta: f64,
    pub global_enabled: bool,
    pub normalize_adjacency: bool,
    pub mean_reconstruction: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            hidden: 128,
            hops: [1, 4],
            beta: DEFAULT_BETA,
            global_enabled: true,
            normalize_adjacency: false,
            mean_reconstruction: false,
        }
    }
}

impl ModelSettings {
    pub fn to_model_config(&self, n_classes: usize, in_features: usize) -> ModelConfig {
        ModelConfig {
            n_classes,
            in_features,
            hidden: self.hidden,
            hops: self.hops,
            beta: self.beta,
            global_enabled: self.global_enabled,
            normalize_adjacency: self.normalize_adjacency,
            mean_reconstruction: self.mean_reconstruction,
        }
    }
}

/// Which samples the test report counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLevel {
    /// Every labeled pixel of every test region.
    #[default]
    Pixel,
    /// One sample per test region, scored against its majority label.
    Region,
}

/// Everything a run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding `cube.raw`/`cube.hdr` and `gt.raw`/`gt.hdr`.
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub segmentation: SegmentationSettings,
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Build region features from the band-standardized cube.
    pub standardize_features: bool,
    pub eval_level: EvalLevel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            segmentation: SegmentationSettings::default(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            standardize_features: true,
            eval_level: EvalLevel::Pixel,
        }
    }
}

/// Region count used when none is configured: about 100 pixels per region,
/// raised to `4 * n_classes * per_class` so that region-level label selection
/// stays feasible on small scenes, and capped at 4 pixels per region.
pub fn resolved_region_count(
    height: usize,
    width: usize,
    n_classes: usize,
    per_class: usize,
) -> usize {
    let wanted = default_region_count(height, width).max(4 * n_classes * per_class);
    wanted.min((height * width).div_ceil(4)).max(1)
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let s = &self.segmentation;
        if !(s.compactness > 0.0 && s.compactness.is_finite()) {
            return Err(Error::Config(format!(
                "compactness must be positive, got {}",
                s.compactness
            )));
        }
        if s.max_iters == 0 {
            return Err(Error::Config("segmentation max_iters must be >= 1".into()));
        }
        if s.n_regions == Some(0) {
            return Err(Error::Config("n_regions must be >= 1".into()));
        }
        // class and band counts are placeholders here; only the data-free
        // settings are checked
        self.model.to_model_config(2, 1).validate()
    }

    /// Fills every setting that depends on the data.
    pub fn resolve(&self, height: usize, width: usize, n_classes: usize) -> Self {
        let mut out = self.clone();
        out.segmentation.n_regions.get_or_insert_with(|| {
            resolved_region_count(height, width, n_classes, self.train.per_class_labels)
        });
        out
    }
}
