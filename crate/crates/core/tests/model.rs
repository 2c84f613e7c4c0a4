mod common;

use std::sync::Arc;

use common::fixtures::{lists, path_graph, random, ten_node_instance};
use common::{max_abs_diff, reference, rows};
use mgcn_agl::autodiff::{finite_difference_check, Matrix, Tape};
use mgcn_agl::graph_learning::AttentionParams;
use mgcn_agl::model::{
    classification_loss, forward, forward_on_tape, global_forward, local_layer, ParamVars,
    Supervision,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn local_layer_on_path_matches_reference() {
    let nbs = [Arc::new(path_graph(4, 1)), Arc::new(path_graph(4, 2))];
    let x = random(4, 3, 1);
    let ws = [random(3, 5, 2), random(3, 5, 3)];
    let avs = [random(10, 1, 4), random(10, 1, 5)];

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let params: [AttentionParams; 2] = std::array::from_fn(|b| AttentionParams {
        weight: tape.leaf(ws[b].clone()),
        attn: tape.leaf(avs[b].clone()),
    });
    let z = local_layer(&mut tape, xv, &params, &nbs).unwrap();
    for b in 0..2 {
        let expect = common::local_branch(&rows(&x), &ws[b], &avs[b], &lists(&nbs[b]));
        assert!(max_abs_diff(&expect, tape.value(z[b])) < 1e-12);
    }
}

#[test]
fn global_layers_match_reference() {
    let mut adj = random(5, 5, 7).mapv(f64::abs);
    adj[[0, 3]] = 0.0;
    adj[[2, 4]] = 0.0;
    let x = random(5, 4, 8);
    let (w1, w2) = (random(4, 6, 9), random(6, 3, 10));

    let mut tape = Tape::new();
    let a = tape.leaf(adj.clone());
    let xv = tape.leaf(x.clone());
    let ws = [tape.leaf(w1.clone()), tape.leaf(w2.clone())];
    let z = global_forward(&mut tape, a, xv, &ws).unwrap();
    let expect = common::global_layers(&rows(&adj), &rows(&x), &w1, &w2);
    assert!(max_abs_diff(&expect, tape.value(z)) < 1e-12);
}

#[test]
fn cross_entropy_matches_direct_sum() {
    let o = random(6, 4, 12).mapv(|v| 3.0 * v);
    let sup = Supervision::new(vec![1, 4, 5], vec![3, 0, 3]).unwrap();
    let mut tape = Tape::new();
    let ov = tape.leaf(o.clone());
    let l = classification_loss(&mut tape, ov, &sup).unwrap();
    let expect = common::cross_entropy(&rows(&o), &sup.ids, &sup.classes);
    assert!((tape.scalar(l) - expect).abs() < 1e-12);
}

#[test]
fn full_forward_matches_reference() {
    for (seed, beta, normalize, mean, global) in [
        (1, 0.75, false, false, true),
        (2, 0.5, false, false, true),
        (3, 0.75, true, true, true),
        (4, 0.75, false, false, false),
    ] {
        let mut inst = ten_node_instance(seed, beta);
        inst.cfg.normalize_adjacency = normalize;
        inst.cfg.mean_reconstruction = mean;
        inst.cfg.global_enabled = global;
        let f = forward(&inst.x, &inst.nbs, &inst.params, &inst.cfg, Some(&inst.sup)).unwrap();
        let r = reference(
            &inst.x,
            &[lists(&inst.nbs[0]), lists(&inst.nbs[1])],
            &inst.params,
            &inst.cfg,
            &inst.sup.ids,
            &inst.sup.classes,
        );
        for b in 0..2 {
            for l in 0..2 {
                assert!(max_abs_diff(&r.z[b][l], f.value(f.out.z[b][l])) < 1e-12);
            }
        }
        assert!(max_abs_diff(&r.z_loc, f.value(f.out.z_loc)) < 1e-12);
        if global {
            assert!(max_abs_diff(&r.a_tilde, f.value(f.out.a_tilde.unwrap())) < 1e-12);
            assert!(max_abs_diff(&r.a, f.value(f.out.a.unwrap())) < 1e-12);
            assert!(max_abs_diff(&r.z_glo, f.value(f.out.z_glo.unwrap())) < 1e-12);
            let kept = r.a.iter().flatten().filter(|&&v| v > 0.0).count();
            assert!(
                kept > 10 && kept < 100,
                "threshold should be active, kept {kept}"
            );
        }
        assert!(max_abs_diff(&r.o, f.scores()) < 1e-10);
        let losses = f.out.losses.unwrap();
        assert!((f.tape.scalar(losses.reconstruction) - r.l_r).abs() < 1e-10);
        assert!((f.tape.scalar(losses.classification) - r.l_c).abs() < 1e-10);
        assert!((f.tape.scalar(losses.total) - r.l).abs() < 1e-10);
    }
}

#[test]
fn unit_fusion_weights_give_plain_pathway_sum() {
    let inst = ten_node_instance(5, 0.75);
    let mut p = inst.params.clone();
    for layers in p.lambda_local.iter_mut() {
        for l in layers.iter_mut() {
            l[[0, 0]] = 1.0;
        }
    }
    let f = forward(&inst.x, &inst.nbs, &p, &inst.cfg, None).unwrap();
    let z = f.out.z;
    let layer1 = f.value(z[0][0]) + f.value(z[1][0]);
    let layer2 = f.value(z[0][1]) + f.value(z[1][1]);
    assert_eq!(f.value(f.out.z_loc), &(layer1 + layer2));
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    for global in [true, false] {
        let mut inst = ten_node_instance(6, 0.0);
        inst.cfg.global_enabled = global;
        let values: Vec<Matrix> = inst
            .params
            .tensors()
            .into_iter()
            .map(|(_, m)| m.clone())
            .collect();
        let graph = |tape: &mut Tape, leaves: &[mgcn_agl::autodiff::Var]| {
            let vars = ParamVars::from_order(leaves)?;
            let x = tape.leaf(inst.x.clone());
            let out = forward_on_tape(tape, x, &inst.nbs, &vars, &inst.cfg, Some(&inst.sup))?;
            Ok(out.losses.unwrap().total)
        };
        let err = finite_difference_check(graph, &values, 1e-6).unwrap();
        assert!(
            err < 1e-4,
            "relative gradient error {err} (global {global})"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabeling_regions_permutes_scores(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let inst = ten_node_instance(seed, 0.75);
        let n = inst.x.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);

        let mut px = Matrix::zeros(inst.x.dim());
        for i in 0..n {
            px.row_mut(perm[i]).assign(&inst.x.row(i));
        }
        let pnbs = [
            Arc::new(inst.nbs[0].permuted(&perm)),
            Arc::new(inst.nbs[1].permuted(&perm)),
        ];
        let psup = Supervision::new(
            inst.sup.ids.iter().map(|&i| perm[i]).collect(),
            inst.sup.classes.clone(),
        ).unwrap();

        let f = forward(&inst.x, &inst.nbs, &inst.params, &inst.cfg, Some(&inst.sup)).unwrap();
        let g = forward(&px, &pnbs, &inst.params, &inst.cfg, Some(&psup)).unwrap();
        for i in 0..n {
            for c in 0..inst.cfg.n_classes {
                let (a, b) = (f.scores()[[i, c]], g.scores()[[perm[i], c]]);
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{} vs {}", a, b);
            }
        }
        let (lf, lg) = (f.out.losses.unwrap().total, g.out.losses.unwrap().total);
        prop_assert!((f.tape.scalar(lf) - g.tape.scalar(lg)).abs() < 1e-10);
    }

    #[test]
    fn positive_scaling_keeps_argmax(seed in 0u64..1000, scale in 1e-3f64..1e3) {
        let inst = ten_node_instance(seed, 0.75);
        let f = forward(&inst.x, &inst.nbs, &inst.params, &inst.cfg, None).unwrap();
        let o = f.scores();
        let argmax = |m: &Matrix| -> Vec<usize> {
            m.outer_iter()
                .map(|r| (0..r.len()).fold(0, |best, j| if r[j] > r[best] { j } else { best }))
                .collect()
        };
        prop_assert_eq!(argmax(o), argmax(&(o * scale)));
    }
}
