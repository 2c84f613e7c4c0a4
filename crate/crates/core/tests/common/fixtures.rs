//! Small fixed instances shared by the integration tests.

use std::sync::Arc;

use mgcn_agl::autodiff::Matrix;
use mgcn_agl::graph_learning::NeighborhoodSets;
use mgcn_agl::model::{ModelConfig, ModelParams, Supervision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::jitter;

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

pub fn path_graph(n: usize, hops: usize) -> NeighborhoodSets {
    NeighborhoodSets::from_lists(
        (0..n)
            .map(|i| (i.saturating_sub(hops)..(i + hops + 1).min(n)).collect())
            .collect(),
    )
}

pub struct Instance {
    pub x: Matrix,
    pub nbs: [Arc<NeighborhoodSets>; 2],
    pub params: ModelParams,
    pub cfg: ModelConfig,
    pub sup: Supervision,
}

/// Ten regions on a ring with a chord, two classes of labels on six of them.
pub fn ten_node_instance(seed: u64, beta: f64) -> Instance {
    let n = 10;
    let mut adjacency: Vec<Vec<usize>> =
        (0..n).map(|i| vec![(i + n - 1) % n, (i + 1) % n]).collect();
    adjacency[0].push(5);
    adjacency[5].push(0);
    let cfg = ModelConfig {
        hidden: 4,
        hops: [1, 2],
        beta,
        ..ModelConfig::new(3, 5)
    };
    let nbs = [
        Arc::new(mgcn_agl::segmentation::hop_neighborhoods(&adjacency, 1).unwrap()),
        Arc::new(mgcn_agl::segmentation::hop_neighborhoods(&adjacency, 2).unwrap()),
    ];
    let mut params = ModelParams::init(&cfg, seed).unwrap();
    jitter(&mut params, seed + 100);
    // spread the local features so the threshold drops some pairs but not all
    for layers in params.local.iter_mut() {
        for lp in layers.iter_mut() {
            lp.weight.mapv_inplace(|v| 3.0 * v);
        }
    }
    let x = random(n, 5, seed + 200).mapv(f64::abs);
    let sup = Supervision::new(vec![0, 2, 3, 6, 7, 9], vec![0, 1, 0, 2, 1, 2]).unwrap();
    Instance {
        x,
        nbs,
        params,
        cfg,
        sup,
    }
}

pub fn lists(nb: &NeighborhoodSets) -> Vec<Vec<usize>> {
    nb.iter().map(|l| l.to_vec()).collect()
}
