use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::model::Supervision;

/// Region ids partitioned into training, validation and test sets.
///
/// `classes[r]` is the majority ground-truth class of region `r` (`1..=C`,
/// `0` for regions without labeled pixels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSplit {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub classes: Vec<u16>,
    pub n_classes: usize,
}

impl LabelSplit {
    /// Training and validation ids together.
    pub fn labeled_ids(&self) -> Vec<usize> {
        let mut ids = [self.train_ids.as_slice(), self.val_ids.as_slice()].concat();
        ids.sort_unstable();
        ids
    }

    /// One-hot rows for every region, nonzero only on labeled ones.
    pub fn one_hot(&self) -> Matrix {
        let mut y = Matrix::zeros((self.classes.len(), self.n_classes));
        for id in self.labeled_ids() {
            y[[id, self.classes[id] as usize - 1]] = 1.0;
        }
        y
    }

    /// Training ids with 0-based classes.
    pub fn train_supervision(&self) -> Supervision {
        Supervision {
            ids: self.train_ids.clone(),
            classes: self
                .train_ids
                .iter()
                .map(|&i| self.classes[i] as usize - 1)
                .collect(),
        }
    }
}

fn by_class(ids: &[usize], classes: &[u16], n_classes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n_classes];
    for &i in ids {
        out[classes[i] as usize - 1].push(i);
    }
    out
}

/// Draws `per_class` labeled regions of every class uniformly at random, or
/// `fallback` for classes with fewer than `per_class` regions. Every other
/// labeled region becomes a test region. The result has an empty
/// validation set; see [`split_train_val`].
pub fn select_labels(
    classes: &[u16],
    n_classes: usize,
    per_class: usize,
    fallback: usize,
    seed: u64,
) -> Result<LabelSplit> {
    if per_class == 0 || fallback == 0 || fallback > per_class {
        return Err(Error::Config(format!(
            "need 1 <= fallback <= per_class, got fallback {fallback} and per_class {per_class}"
        )));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c as usize > n_classes) {
        return Err(Error::Data(format!(
            "region class {bad} exceeds {n_classes} classes"
        )));
    }
    let labeled: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] > 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in by_class(&labeled, classes, n_classes)
        .into_iter()
        .enumerate()
    {
        let take = if members.len() >= per_class {
            per_class
        } else if members.len() >= fallback {
            fallback
        } else {
            return Err(Error::InfeasibleClass {
                class: c + 1,
                available: members.len(),
                required: fallback,
            });
        };
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabelSplit {
        train_ids: train,
        val_ids: Vec::new(),
        test_ids: test,
        classes: classes.to_vec(),
        n_classes,
    })
}

/// Per-class stratified split of the selected regions: `round(k * (1 -
/// val_fraction))` of each class's `k` regions train (halves round up, at
/// least one), the rest validate.
pub fn split_train_val(selected: &LabelSplit, val_fraction: f64, seed: u64) -> Result<LabelSplit> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    let ids = selected.labeled_ids();
    if ids.is_empty() {
        return Err(Error::Config("no labeled regions to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut members in by_class(&ids, &selected.classes, selected.n_classes) {
        if members.is_empty() {
            continue;
        }
        let k = members.len();
        let n_train = train_count(k, val_fraction);
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(LabelSplit {
        train_ids: train,
        val_ids: val,
        ..selected.clone()
    })
}

/// Training share of `k` selected regions.
pub fn train_count(k: usize, val_fraction: f64) -> usize {
    let exact = k as f64 * (1.0 - val_fraction);
    // exact products like 13.5 must round up even when they land a hair below
    let rounded = (exact + 0.5 + 1e-9).floor() as usize;
    rounded.clamp(1, k)
}
