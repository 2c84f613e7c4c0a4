use std::fmt::Write as _;

use crate::data_io::GroundTruth;
use crate::error::{Error, Result};
use crate::segmentation::SegmentationMap;

/// Confusion matrix and the accuracies derived from it. Rows are true
/// classes, columns predictions, both 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes without samples.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    /// Chance agreement was 1, so kappa was set by convention.
    pub kappa_degenerate: bool,
    pub n_eval: u64,
}

/// Builds the report for (truth, prediction) pairs with 1-based classes.
pub fn evaluate(
    pairs: impl IntoIterator<Item = (u16, u16)>,
    n_classes: usize,
) -> Result<EvalReport> {
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (truth, pred) in pairs {
        let (t, p) = (truth as usize, pred as usize);
        if t == 0 || p == 0 || t > n_classes || p > n_classes {
            return Err(Error::Data(format!(
                "class pair ({truth}, {pred}) outside 1..={n_classes}"
            )));
        }
        confusion[t - 1][p - 1] += 1;
    }
    evaluate_confusion(confusion)
}

/// Metrics of a square confusion matrix.
pub fn evaluate_confusion(confusion: Vec<Vec<u64>>) -> Result<EvalReport> {
    let c = confusion.len();
    if c == 0 || confusion.iter().any(|r| r.len() != c) {
        return Err(Error::Data(
            "confusion matrix must be square and non-empty".into(),
        ));
    }
    let n: u64 = confusion.iter().flatten().sum();
    if n == 0 {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();
    let row: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..c)
        .map(|j| confusion.iter().map(|r| r[j]).sum())
        .collect();

    let per_class_accuracy: Vec<Option<f64>> = (0..c)
        .map(|i| (row[i] > 0).then(|| confusion[i][i] as f64 / row[i] as f64))
        .collect();
    let present: Vec<f64> = per_class_accuracy.iter().flatten().copied().collect();
    let average_accuracy = present.iter().sum::<f64>() / present.len() as f64;
    let overall_accuracy = trace as f64 / n as f64;

    // (p_o - p_e) / (1 - p_e) with both scaled by n^2, so it is exact in
    // integers up to the final division
    let chance: u128 = (0..c).map(|i| row[i] as u128 * col[i] as u128).sum();
    let n2 = n as u128 * n as u128;
    let agree = n as u128 * trace as u128;
    let (kappa, kappa_degenerate) = if chance == n2 {
        (if trace == n { 1.0 } else { 0.0 }, true)
    } else {
        ((agree as f64 - chance as f64) / (n2 - chance) as f64, false)
    };

    Ok(EvalReport {
        confusion,
        per_class_accuracy,
        overall_accuracy,
        average_accuracy,
        kappa,
        kappa_degenerate,
        n_eval: n,
    })
}

/// (truth, prediction) for every labeled pixel inside the regions `eval_ids`
/// (sorted).
pub fn pixel_eval_pairs(
    seg: &SegmentationMap,
    gt: &GroundTruth,
    region_pred: &[u16],
    eval_ids: &[usize],
) -> Result<Vec<(u16, u16)>> {
    if (seg.height(), seg.width()) != (gt.height(), gt.width()) {
        return Err(Error::Data(
            "ground truth and segmentation sizes differ".into(),
        ));
    }
    if region_pred.len() != seg.n_regions() {
        return Err(Error::Data(format!(
            "{} predictions for {} regions",
            region_pred.len(),
            seg.n_regions()
        )));
    }
    let mut wanted = vec![false; seg.n_regions()];
    for &r in eval_ids {
        wanted[r] = true;
    }
    Ok(seg
        .region_of()
        .iter()
        .zip(gt.labels())
        .filter(|&(&r, &t)| wanted[r] && t > 0)
        .map(|(&r, &t)| (t, region_pred[r]))
        .collect())
}

impl EvalReport {
    /// Plain-text `key = value` lines followed by the confusion matrix as
    /// comma-separated rows.
    pub fn to_text(&self, header: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "n_eval = {}", self.n_eval);
        let _ = writeln!(out, "overall_accuracy = {}", self.overall_accuracy);
        let _ = writeln!(out, "average_accuracy = {}", self.average_accuracy);
        let _ = writeln!(out, "kappa = {}", self.kappa);
        let _ = writeln!(out, "kappa_degenerate = {}", self.kappa_degenerate);
        for (i, acc) in self.per_class_accuracy.iter().enumerate() {
            let v = acc.map(|a| a.to_string()).unwrap_or_else(|| "none".into());
            let _ = writeln!(out, "class_{}_accuracy = {v}", i + 1);
        }
        out.push_str("confusion\n");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn hand_evaluated_kappa() {
        let r = evaluate_confusion(vec![vec![4, 1], vec![2, 3]]).unwrap();
        assert_eq!(r.overall_accuracy, 0.7);
        assert_eq!(r.kappa, 0.4);
        assert_eq!(r.per_class_accuracy, vec![Some(0.8), Some(0.6)]);
        assert_eq!(r.average_accuracy, 0.7);
        assert_eq!(r.n_eval, 10);
    }

    #[test]
    fn perfect_and_chance_confusions() {
        let r = evaluate_confusion(vec![vec![5, 0], vec![0, 5]]).unwrap();
        assert_eq!(
            (r.overall_accuracy, r.average_accuracy, r.kappa),
            (1.0, 1.0, 1.0)
        );
        let r = evaluate_confusion(vec![vec![2, 2], vec![2, 2]]).unwrap();
        assert_eq!((r.overall_accuracy, r.kappa), (0.5, 0.0));
    }

    #[test]
    fn single_class_is_degenerate() {
        let r = evaluate_confusion(vec![vec![3, 0], vec![0, 0]]).unwrap();
        assert!(r.kappa_degenerate);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.per_class_accuracy[1], None);
        assert_eq!(r.average_accuracy, 1.0);
        let r = evaluate_confusion(vec![vec![0, 3], vec![0, 0]]).unwrap();
        assert!(!r.kappa_degenerate);
        assert_eq!(r.kappa, 0.0);
    }

    #[test]
    fn pairs_fill_confusion() {
        let r = evaluate([(1, 1), (1, 2), (2, 2), (3, 1)], 3).unwrap();
        assert_eq!(
            r.confusion,
            vec![vec![1, 1, 0], vec![0, 1, 0], vec![1, 0, 0]]
        );
        assert!(evaluate([(0, 1)], 3).is_err());
        assert!(evaluate([(1, 4)], 3).is_err());
        assert!(evaluate(std::iter::empty(), 3).is_err());
    }

    #[test]
    fn report_text_lists_confusion() {
        let r = evaluate_confusion(vec![vec![4, 1], vec![2, 3]]).unwrap();
        let text = r.to_text(&[("model", "MGCN-AGL".into())]);
        assert!(text.starts_with("model = MGCN-AGL\nn_eval = 10\n"));
        assert!(text.contains("kappa = 0.4\n"));
        assert!(text.ends_with("confusion\n4,1\n2,3\n"));
    }

    fn confusion_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..5).prop_flat_map(|c| {
            proptest::collection::vec(proptest::collection::vec(0u64..20, c), c)
                .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
        })
    }

    proptest! {
        #[test]
        fn metric_bounds(m in confusion_strategy()) {
            let r = evaluate_confusion(m.clone()).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r.kappa));
            let diagonal = m.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, &v)| i == j || v == 0));
            prop_assert_eq!(r.kappa == 1.0, diagonal);
            let accs: Vec<f64> = r.per_class_accuracy.iter().flatten().copied().collect();
            let lo = accs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.average_accuracy >= lo - 1e-15 && r.average_accuracy <= hi + 1e-15);
            prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>(), r.n_eval);
        }

        #[test]
        fn oa_invariant_under_class_relabeling(m in confusion_strategy(), shift in 0usize..5) {
            let c = m.len();
            let perm: Vec<usize> = (0..c).map(|i| (i + shift) % c).collect();
            let mut p = vec![vec![0u64; c]; c];
            for i in 0..c {
                for j in 0..c {
                    p[perm[i]][perm[j]] = m[i][j];
                }
            }
            let a = evaluate_confusion(m).unwrap();
            let b = evaluate_confusion(p).unwrap();
            prop_assert_eq!(a.overall_accuracy, b.overall_accuracy);
            prop_assert_eq!(a.kappa, b.kappa);
        }
    }
}
