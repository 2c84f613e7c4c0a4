//! Straight-line reference evaluation of the network, written with nested
//! loops over plain vectors and no shared code with the library.
#![allow(dead_code)]

pub mod fixtures;

use mgcn_agl::autodiff::Matrix;
use mgcn_agl::model::{ModelConfig, ModelParams};

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Matrix) -> Rows {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &Rows, b: &Matrix) -> f64 {
    assert_eq!((a.len(), a[0].len()), b.dim());
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            worst = worst.max((a[i][j] - b[[i, j]]).abs());
        }
    }
    worst
}

fn times(h: &Rows, w: &Matrix) -> Rows {
    let (d_in, d_out) = w.dim();
    h.iter()
        .map(|hi| {
            (0..d_out)
                .map(|c| (0..d_in).map(|k| hi[k] * w[[k, c]]).sum())
                .collect()
        })
        .collect()
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.2 * v
    }
}

/// Attention coefficients as a dense `n x n` table.
pub fn attention(h: &Rows, w: &Matrix, a: &Matrix, nbrs: &[Vec<usize>]) -> Rows {
    let wh = times(h, w);
    let u = w.ncols();
    let n = h.len();
    let mut alpha = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut denom = 0.0;
        for &k in &nbrs[i] {
            let mut s = 0.0;
            for c in 0..u {
                s += a[[c, 0]] * wh[i][c] + a[[u + c, 0]] * wh[k][c];
            }
            denom += leaky(s).exp();
        }
        for &j in &nbrs[i] {
            let mut s = 0.0;
            for c in 0..u {
                s += a[[c, 0]] * wh[i][c] + a[[u + c, 0]] * wh[j][c];
            }
            alpha[i][j] = leaky(s).exp() / denom;
        }
    }
    alpha
}

/// One local branch: `relu(sum_j alpha_ij W h_j)`.
pub fn local_branch(h: &Rows, w: &Matrix, a: &Matrix, nbrs: &[Vec<usize>]) -> Rows {
    let alpha = attention(h, w, a, nbrs);
    let wh = times(h, w);
    let n = h.len();
    let u = w.ncols();
    let mut out = vec![vec![0.0; u]; n];
    for i in 0..n {
        for c in 0..u {
            let mut acc = 0.0;
            for &j in &nbrs[i] {
                acc += alpha[i][j] * wh[j][c];
            }
            out[i][c] = relu(acc);
        }
    }
    out
}

/// Two composed global layers over a dense adjacency.
pub fn global_layers(adj: &Rows, x: &Rows, w1: &Matrix, w2: &Matrix) -> Rows {
    let n = x.len();
    let spread = |m: &Rows| -> Rows {
        (0..n)
            .map(|i| {
                (0..m[0].len())
                    .map(|c| (0..n).map(|j| adj[i][j] * m[j][c]).sum())
                    .collect()
            })
            .collect()
    };
    let z1: Rows = times(&spread(x), w1)
        .into_iter()
        .map(|r| r.into_iter().map(relu).collect())
        .collect();
    times(&spread(&z1), w2)
        .into_iter()
        .map(|r| r.into_iter().map(relu).collect())
        .collect()
}

pub fn cross_entropy(o: &Rows, ids: &[usize], classes: &[usize]) -> f64 {
    let mut total = 0.0;
    for (&i, &c) in ids.iter().zip(classes) {
        let denom: f64 = o[i].iter().map(|v| v.exp()).sum();
        total -= (o[i][c].exp() / denom).ln();
    }
    total
}

pub struct Reference {
    pub z: [[Rows; 2]; 2],
    pub z_loc: Rows,
    pub a_tilde: Rows,
    pub a: Rows,
    pub z_glo: Rows,
    pub o: Rows,
    pub l_r: f64,
    pub l_c: f64,
    pub l: f64,
}

pub fn reference(
    x: &Matrix,
    nbrs: &[Vec<Vec<usize>>; 2],
    p: &ModelParams,
    cfg: &ModelConfig,
    ids: &[usize],
    classes: &[usize],
) -> Reference {
    let x = rows(x);
    let n = x.len();
    let u = cfg.hidden;
    let c = cfg.n_classes;

    let z11 = local_branch(&x, &p.local[0][0].weight, &p.local[0][0].attn, &nbrs[0]);
    let z21 = local_branch(&x, &p.local[1][0].weight, &p.local[1][0].attn, &nbrs[1]);
    let mut h2 = vec![vec![0.0; u]; n];
    for i in 0..n {
        for k in 0..u {
            h2[i][k] = z11[i][k] + z21[i][k];
        }
    }
    let z12 = local_branch(&h2, &p.local[0][1].weight, &p.local[0][1].attn, &nbrs[0]);
    let z22 = local_branch(&h2, &p.local[1][1].weight, &p.local[1][1].attn, &nbrs[1]);
    let lam = |b: usize, l: usize| p.lambda_local[b][l][[0, 0]];

    let mut z_loc = vec![vec![0.0; u]; n];
    for i in 0..n {
        for k in 0..u {
            z_loc[i][k] = lam(0, 0) * z11[i][k]
                + lam(1, 0) * z21[i][k]
                + lam(0, 1) * z12[i][k]
                + lam(1, 1) * z22[i][k];
        }
    }
    let z_hat = times(&z_loc, &p.output);

    let mut a_tilde = vec![vec![0.0; n]; n];
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = (0..u).map(|k| (z_loc[i][k] - z_loc[j][k]).powi(2)).sum();
            a_tilde[i][j] = (-d).exp();
            if a_tilde[i][j] >= cfg.beta {
                a[i][j] = a_tilde[i][j];
            }
        }
    }
    if cfg.normalize_adjacency {
        for row in a.iter_mut() {
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    let (z_glo, o) = if cfg.global_enabled {
        let z_glo = global_layers(&a, &x, &p.global[0], &p.global[1]);
        let (ll, lg) = (p.lambda_loc[[0, 0]], p.lambda_glo[[0, 0]]);
        let o = (0..n)
            .map(|i| {
                (0..c)
                    .map(|k| ll * z_hat[i][k] + lg * z_glo[i][k])
                    .collect()
            })
            .collect();
        (z_glo, o)
    } else {
        let ll = p.lambda_loc[[0, 0]];
        let o = z_hat
            .iter()
            .map(|r| r.iter().map(|v| ll * v).collect())
            .collect();
        (vec![vec![0.0; c]; n], o)
    };

    let mut l_r = 0.0;
    if cfg.global_enabled {
        for (p_idx, &i) in ids.iter().enumerate() {
            for (q_idx, &j) in ids.iter().enumerate() {
                let target = if classes[p_idx] == classes[q_idx] {
                    1.0
                } else {
                    0.0
                };
                l_r += (a_tilde[i][j] - target).powi(2);
            }
        }
        if cfg.mean_reconstruction {
            l_r /= (ids.len() * ids.len()) as f64;
        }
    }
    let l_c = if ids.is_empty() {
        0.0
    } else {
        cross_entropy(&o, ids, classes)
    };
    let zeta = (1.0 + p.zeta_raw[[0, 0]].exp()).ln();

    Reference {
        z: [[z11, z12], [z21, z22]],
        z_loc,
        a_tilde,
        a,
        z_glo,
        o,
        l_r,
        l_c,
        l: l_r + zeta * l_c,
    }
}

/// Perturbs every parameter so that fusion weights differ from one and the
/// attention is far from uniform.
pub fn jitter(p: &mut ModelParams, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for l in 0..2 {
        for b in 0..2 {
            p.local[b][l]
                .attn
                .mapv_inplace(|_| rng.gen_range(-0.5..0.5));
            p.lambda_local[b][l][[0, 0]] = rng.gen_range(0.5..1.5);
        }
    }
    p.lambda_loc[[0, 0]] = rng.gen_range(0.5..1.5);
    p.lambda_glo[[0, 0]] = rng.gen_range(0.5..1.5);
    p.zeta_raw[[0, 0]] = rng.gen_range(-1.0..1.0);
}
