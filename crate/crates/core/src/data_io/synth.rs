use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GroundTruth, HyperspectralImage};
use crate::error::{Error, Result};

/// Smallest class footprint accepted by [`synth_hsi`].
pub const MIN_CLASS_PIXELS: usize = 60;

const MAX_MEAN_DRAWS: usize = 10_000;

/// Spatial arrangement of classes in a synthetic scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLayout {
    /// Rectangular tiles, about `sqrt(C)` rows of them.
    Blocks,
    /// `C` vertical stripes.
    Stripes,
    /// `2C` vertical stripes; class `c` occupies stripes `c` and `c + C`, so
    /// each class appears in two places separated by every other class.
    SplitPairs,
}

impl std::str::FromStr for ClassLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(Self::Blocks),
            "stripes" => Ok(Self::Stripes),
            "split_pairs" | "split-pairs" => Ok(Self::SplitPairs),
            other => Err(Error::Config(format!("unknown class layout `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub n_classes: usize,
    pub layout: ClassLayout,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 40,
            width: 40,
            bands: 8,
            n_classes: 3,
            layout: ClassLayout::Blocks,
            noise_sigma: 0.05,
            seed: 1,
        }
    }
}

fn class_map(cfg: &SynthConfig) -> Result<Vec<u16>> {
    let (h, w, c) = (cfg.height, cfg.width, cfg.n_classes);
    let infeasible = |why: String| Error::Config(format!("infeasible layout: {why}"));
    let mut map = vec![0u16; h * w];
    match cfg.layout {
        ClassLayout::Stripes | ClassLayout::SplitPairs => {
            let stripes = if cfg.layout == ClassLayout::Stripes {
                c
            } else {
                2 * c
            };
            if w < stripes {
                return Err(infeasible(format!(
                    "{stripes} stripes need width >= {stripes}, got {w}"
                )));
            }
            for y in 0..h {
                for x in 0..w {
                    map[y * w + x] = ((x * stripes / w) % c + 1) as u16;
                }
            }
        }
        ClassLayout::Blocks => {
            let rows = ((c as f64).sqrt().round() as usize).max(1);
            if h < rows {
                return Err(infeasible(format!(
                    "{rows} block rows need height >= {rows}, got {h}"
                )));
            }
            let mut offset = 0;
            let mut row_classes = Vec::with_capacity(rows);
            for r in 0..rows {
                let k = c / rows + usize::from(r < c % rows);
                if w < k {
                    return Err(infeasible(format!(
                        "{k} blocks in a row need width >= {k}, got {w}"
                    )));
                }
                row_classes.push((offset, k));
                offset += k;
            }
            for y in 0..h {
                let (first, k) = row_classes[y * rows / h];
                for x in 0..w {
                    map[y * w + x] = (first + x * k / w + 1) as u16;
                }
            }
        }
    }
    let mut counts = vec![0usize; c + 1];
    for &l in &map {
        counts[l as usize] += 1;
    }
    if let Some(k) = (1..=c).find(|&k| counts[k] < MIN_CLASS_PIXELS) {
        return Err(infeasible(format!(
            "class {k} gets {} pixels, need at least {MIN_CLASS_PIXELS}",
            counts[k]
        )));
    }
    Ok(map)
}

fn class_means(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let min_dist = 3.0 * cfg.noise_sigma * (cfg.bands as f64).sqrt();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_classes);
    for class in 0..cfg.n_classes {
        let mut accepted = None;
        for _ in 0..MAX_MEAN_DRAWS {
            // nonnegative unit-norm spectrum
            let mut v: Vec<f64> = (0..cfg.bands)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z.abs()
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let far_enough = means.iter().all(|m| {
                m.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    >= min_dist
            });
            if far_enough {
                accepted = Some(v);
                break;
            }
        }
        means.push(accepted.ok_or_else(|| {
            Error::Config(format!(
                "could not place class {} mean at distance >= {min_dist:.4} from the others",
                class + 1
            ))
        })?);
    }
    Ok(means)
}

/// Generates a labeled synthetic scene: each class gets a random unit-norm
/// mean spectrum and every pixel is its class mean plus i.i.d. Gaussian
/// noise. A pure function of `cfg`.
pub fn synth_hsi(cfg: &SynthConfig) -> Result<(HyperspectralImage, GroundTruth)> {
    if cfg.n_classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {}",
            cfg.n_classes
        )));
    }
    if cfg.height == 0 || cfg.width == 0 || cfg.bands == 0 {
        return Err(Error::Config(
            "synthetic cube dimensions must be positive".into(),
        ));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise sigma must be >= 0, got {}",
            cfg.noise_sigma
        )));
    }
    if cfg.n_classes > u16::MAX as usize {
        return Err(Error::Config(
            "too many classes for a 16-bit label map".into(),
        ));
    }
    let labels = class_map(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = class_means(cfg, &mut rng)?;
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");

    let mut values = Vec::with_capacity(labels.len() * cfg.bands);
    for &l in &labels {
        for &m in &means[l as usize - 1] {
            let eps = if cfg.noise_sigma > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            values.push(m + eps);
        }
    }

    let image = HyperspectralImage::new(cfg.height, cfg.width, cfg.bands, values)?;
    let gt = GroundTruth::new(cfg.height, cfg.width, labels)?;
    Ok((image, gt))
}
