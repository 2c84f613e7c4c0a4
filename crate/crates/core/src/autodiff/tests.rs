use std::sync::Arc;

use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn path3() -> Arc<NeighborhoodSets> {
    Arc::new(NeighborhoodSets::from_lists(vec![
        vec![0, 1],
        vec![0, 1, 2],
        vec![1, 2],
    ]))
}

#[test]
fn matmul_identity_and_hand_values() {
    let mut t = Tape::new();
    let i2 = t.leaf(Array2::eye(2));
    let m = t.leaf(array![[0.3, -1.5], [2.0, 7.0]]);
    let p = t.matmul(i2, m).unwrap();
    assert_eq!(t.value(p), t.value(m));

    let a = t.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
    let b = t.leaf(array![[1.0], [1.0]]);
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c), &array![[3.0], [7.0]]);
}

#[test]
fn matmul_shape_error_reports_both_shapes() {
    let mut t = Tape::new();
    let a = t.leaf(Matrix::zeros((2, 3)));
    let b = t.leaf(Matrix::zeros((2, 3)));
    match t.matmul(a, b) {
        Err(Error::Shape { left, right, .. }) => {
            assert_eq!(left, (2, 3));
            assert_eq!(right, (2, 3));
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let f = |t: &mut Tape, p: &[Var]| {
        let m = t.matmul(p[0], p[1])?;
        let sq = t.mul(m, m)?;
        Ok(t.sum(sq))
    };
    let err = finite_difference_check(f, &[random(5, 4, 1), random(4, 3, 2)], 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn leaky_relu_values_and_kink() {
    let mut t = Tape::new();
    let x = t.leaf(array![[2.0, -1.0, 0.0]]);
    let y = t.leaky_relu(x, 0.2).unwrap();
    assert_eq!(t.value(y), &array![[2.0, -0.2, 0.0]]);
    let s = t.sum(y);
    let g = t.backward(s).unwrap().get(x);
    assert_eq!(g, array![[1.0, 0.2, 0.2]]);
    assert!(t.leaky_relu(x, 1.0).is_err());
}

#[test]
fn relu_clamps_and_kink_uses_zero_slope() {
    let mut t = Tape::new();
    let x = t.leaf(array![[-3.0, 0.0, 4.0]]);
    let y = t.relu(x);
    assert_eq!(t.value(y), &array![[0.0, 0.0, 4.0]]);
    let s = t.sum(y);
    assert_eq!(t.backward(s).unwrap().get(x), array![[0.0, 0.0, 1.0]]);
}

#[test]
fn masked_softmax_closed_forms() {
    let mut t = Tape::new();
    let mask = path3();
    let scores = t.leaf(array![
        [0.0, 0.0, 99.0],
        [3f64.ln(), 0.0, 0.0],
        [5.0, 42.0, 0.0]
    ]);
    let y = t.masked_softmax(scores, &mask).unwrap();
    let v = t.value(y);
    assert_eq!(v[[0, 0]], 0.5);
    assert_eq!(v[[0, 1]], 0.5);
    assert_eq!(v[[0, 2]], 0.0);
    assert_eq!(v[[2, 0]], 0.0);
    assert!((v[[2, 1]] + v[[2, 2]] - 1.0).abs() < 1e-12);

    let mut t = Tape::new();
    let two = Arc::new(NeighborhoodSets::from_lists(vec![vec![0, 1], vec![1]]));
    let s = t.leaf(array![[3f64.ln(), 0.0], [0.0, 123.0]]);
    let y = t.masked_softmax(s, &two).unwrap();
    assert!((t.value(y)[[0, 0]] - 0.75).abs() < 1e-15);
    assert!((t.value(y)[[0, 1]] - 0.25).abs() < 1e-15);
    assert_eq!(t.value(y)[[1, 1]], 1.0);
    assert_eq!(t.value(y)[[1, 0]], 0.0);
}

#[test]
fn masked_softmax_survives_huge_scores() {
    let mut t = Tape::new();
    let mask = Arc::new(NeighborhoodSets::complete(2));
    let s = t.leaf(array![[1000.0, 1000.0], [-1000.0, 0.0]]);
    let y = t.masked_softmax(s, &mask).unwrap();
    assert_eq!(t.value(y)[[0, 0]], 0.5);
    assert!(t.value(y).iter().all(|v| v.is_finite()));
}

#[test]
fn masked_softmax_empty_row_is_an_error() {
    let mut t = Tape::new();
    let mask = Arc::new(NeighborhoodSets::from_lists(vec![vec![0], vec![]]));
    let s = t.leaf(Matrix::zeros((2, 2)));
    assert!(matches!(
        t.masked_softmax(s, &mask),
        Err(Error::DegenerateRow { row: 1 })
    ));
}

#[test]
fn masked_softmax_composite_gradient() {
    let mask = path3();
    let f = move |t: &mut Tape, p: &[Var]| {
        let y = t.masked_softmax(p[0], &mask)?;
        let w = t.mul(y, p[1])?;
        Ok(t.sum(w))
    };
    let err = finite_difference_check(f, &[random(3, 3, 3), random(3, 3, 4)], 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn row_sq_dist_symmetric_zero_diagonal() {
    let mut t = Tape::new();
    let z = t.leaf(array![[1.0, 2.0], [1.0, 2.0], [4.0, 6.0]]);
    let d = t.row_sq_dist(z);
    let v = t.value(d);
    assert_eq!(v[[0, 1]], 0.0);
    assert_eq!(v[[0, 2]], 25.0);
    assert_eq!(v[[2, 0]], 25.0);
    assert!((0..3).all(|i| v[[i, i]] == 0.0));
}

#[test]
fn exp_row_sq_dist_gradient() {
    let f = |t: &mut Tape, p: &[Var]| {
        let d = t.row_sq_dist(p[0]);
        let n = t.scale(d, -1.0);
        let e = t.exp(n);
        let w = t.mul(e, p[1])?;
        Ok(t.sum(w))
    };
    let err = finite_difference_check(f, &[random(4, 3, 5), random(4, 4, 6)], 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn structural_ops_gradients() {
    let mask = path3();
    let f = move |t: &mut Tape, p: &[Var]| {
        // concat, slice, outer sum, leaky relu, aggregate, gather, log-softmax
        let stacked = t.concat_rows(p[0], p[1])?;
        let top = t.slice_rows(stacked, 1, 4)?;
        let e = t.slice_rows(p[2], 0, 3)?;
        let f = t.slice_rows(p[2], 3, 6)?;
        let scores = t.outer_sum(e, f)?;
        let lr = t.leaky_relu(scores, 0.2)?;
        let alpha = t.masked_softmax(lr, &mask)?;
        let agg = t.neighbor_aggregate(alpha, top, &mask)?;
        let ls = t.log_softmax_rows(agg);
        let g = t.gather(ls, &[0, 2, 2], &[1, 0])?;
        let sp = t.softplus(g);
        let lg = t.log(sp);
        let sc = t.scalar_mul(p[3], lg)?;
        Ok(t.sum(sc))
    };
    let params = [
        random(2, 2, 7),
        random(2, 2, 8),
        random(6, 1, 9),
        array![[0.7]],
    ];
    let err = finite_difference_check(f, &params, 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn row_normalize_and_sparsify_gradients() {
    let f = |t: &mut Tape, p: &[Var]| {
        let e = t.exp(p[0]);
        let sp = t.sparsify(e, 0.0);
        let rn = t.row_normalize(sp);
        let w = t.mul(rn, p[1])?;
        let r = t.relu(w);
        let s = t.sub(r, w)?;
        let a = t.add(s, w)?;
        Ok(t.sum(a))
    };
    let err = finite_difference_check(f, &[random(3, 4, 10), random(3, 4, 11)], 1e-5).unwrap();
    assert!(err < 1e-6, "rel err {err}");
}

#[test]
fn sparsify_gate_blocks_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(array![[0.8, 0.5, 0.75]]);
    let y = t.sparsify(x, 0.75);
    assert_eq!(t.value(y), &array![[0.8, 0.0, 0.75]]);
    let s = t.sum(y);
    assert_eq!(t.backward(s).unwrap().get(x), array![[1.0, 0.0, 1.0]]);
}

#[test]
fn backward_of_sum_is_all_ones() {
    let mut t = Tape::new();
    let w = t.leaf(random(2, 2, 12));
    let s = t.sum(w);
    assert_eq!(t.backward(s).unwrap().get(w), Matrix::ones((2, 2)));
}

#[test]
fn backward_of_sum_matmul_is_ones_times_x_transpose() {
    let mut t = Tape::new();
    let w = t.leaf(random(3, 2, 13));
    let x = t.leaf(array![[1.5, -2.0], [0.5, 4.0]]);
    let p = t.matmul(w, x).unwrap();
    let s = t.sum(p);
    let g = t.backward(s).unwrap().get(w);
    // d/dW_ik sum_j (W x)_ij = sum_j x_kj
    for i in 0..3 {
        assert_eq!(g[[i, 0]], -0.5);
        assert_eq!(g[[i, 1]], 4.5);
    }
}

#[test]
fn backward_rejects_non_scalar_and_zeros_unreachable() {
    let mut t = Tape::new();
    let a = t.leaf(Matrix::ones((2, 2)));
    let unused = t.leaf(Matrix::ones((3, 1)));
    assert!(matches!(
        t.backward(a),
        Err(Error::NonScalarLoss { rows: 2, cols: 2 })
    ));
    let s = t.sum(a);
    let grads = t.backward(s).unwrap();
    assert!(!grads.is_reachable(unused));
    assert_eq!(grads.get(unused), Matrix::zeros((3, 1)));
}

#[test]
fn fd_check_on_square() {
    let f = |t: &mut Tape, p: &[Var]| t.mul(p[0], p[0]);
    let err = finite_difference_check(f, &[array![[3.0]]], 1e-5).unwrap();
    assert!(err < 1e-8, "rel err {err}");
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut t = Tape::new();
        let a = t.leaf(random(6, 5, 20));
        let b = t.leaf(random(5, 6, 21));
        let m = t.matmul(a, b).unwrap();
        let d = t.row_sq_dist(m);
        let e = t.exp(d);
        let s = t.sum(e);
        let g = t.backward(s).unwrap();
        (t.value(e).clone(), g.get(a), g.get(b))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn backward_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, seed in 0u64..1000) {
        let w0 = random(3, 3, seed);
        let x0 = random(3, 2, seed + 1);
        let grads_of = |ca: f64, cb: f64| {
            let mut t = Tape::new();
            let w = t.leaf(w0.clone());
            let x = t.leaf(x0.clone());
            let m = t.matmul(w, x).unwrap();
            let sq = t.mul(m, m).unwrap();
            let l1 = t.sum(sq);
            let e = t.exp(w);
            let l2 = t.sum(e);
            let a = t.scale(l1, ca);
            let b = t.scale(l2, cb);
            let l = t.add(a, b).unwrap();
            t.backward(l).unwrap().get(w)
        };
        let combined = grads_of(alpha, beta);
        let separate = grads_of(1.0, 0.0) * alpha + grads_of(0.0, 1.0) * beta;
        for (c, s) in combined.iter().zip(separate.iter()) {
            prop_assert!((c - s).abs() <= 1e-10 * c.abs().max(1.0));
        }
    }

    #[test]
    fn masked_softmax_rows_sum_to_one(seed in 0u64..10_000, scale in 0.1f64..50.0) {
        let mask = path3();
        let mut t = Tape::new();
        let s = t.leaf(random(3, 3, seed) * scale);
        let y = t.masked_softmax(s, &mask).unwrap();
        let v = t.value(y);
        for (i, nbrs) in mask.iter().enumerate() {
            let total: f64 = nbrs.iter().map(|&j| v[[i, j]]).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for j in 0..3 {
                if !nbrs.contains(&j) {
                    prop_assert_eq!(v[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn random_matmul_chain_matches_fd(seed in 0u64..200) {
        let f = |t: &mut Tape, p: &[Var]| {
            let m = t.matmul(p[0], p[1])?;
            let e = t.softplus(m);
            Ok(t.sum(e))
        };
        let err = finite_difference_check(f, &[random(3, 4, seed), random(4, 2, seed + 7)], 1e-5).unwrap();
        prop_assert!(err < 1e-6);
    }
}
