use std::sync::Arc;

use super::params::{ModelConfig, ModelParams, ParamVars, BRANCHES, LAYERS};
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::graph_learning::{
    attention_edges, reconstruct_adjacency, reconstruction_loss, sparsify, AttentionParams,
    NeighborhoodSets,
};

/// Labeled nodes and their 0-based classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Supervision {
    pub ids: Vec<usize>,
    pub classes: Vec<usize>,
}

impl Supervision {
    pub fn new(ids: Vec<usize>, classes: Vec<usize>) -> Result<Self> {
        if ids.len() != classes.len() {
            return Err(Error::Config(
                "supervision ids and classes differ in length".into(),
            ));
        }
        Ok(Self { ids, classes })
    }

    /// One-hot rows for the labeled nodes, `k x C`.
    pub fn one_hot(&self, n_classes: usize) -> Matrix {
        let mut y = Matrix::zeros((self.ids.len(), n_classes));
        for (r, &c) in self.classes.iter().enumerate() {
            y[[r, c]] = 1.0;
        }
        y
    }
}

/// Loss terms of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Losses {
    pub reconstruction: Var,
    pub classification: Var,
    pub total: Var,
    /// `softplus(zeta_raw)`
    pub zeta: Var,
}

/// Every intermediate of one forward pass, as handles into `tape`.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `[branch][layer]`
    pub z: [[Var; LAYERS]; BRANCHES],
    pub z_loc: Var,
    pub z_hat_loc: Var,
    /// Dense and sparsified reconstructed adjacency (global level only).
    pub a_tilde: Option<Var>,
    pub a: Option<Var>,
    pub z_glo: Option<Var>,
    pub o: Var,
    pub losses: Option<Losses>,
}

/// A recorded forward pass together with the tape it lives on.
pub struct Forward {
    pub tape: Tape,
    pub params: ParamVars,
    pub out: ForwardOutput,
}

impl Forward {
    pub fn value(&self, v: Var) -> &Matrix {
        self.tape.value(v)
    }

    /// Class scores `O`, one row per region.
    pub fn scores(&self) -> &Matrix {
        self.tape.value(self.out.o)
    }
}

/// One local layer for both branches:
/// `Z_b[i] = relu(sum_{j in N_b(i)} alpha_ij (H W_b)[j])`.
pub fn local_layer(
    tape: &mut Tape,
    input: Var,
    params: &[AttentionParams; BRANCHES],
    neighborhoods: &[Arc<NeighborhoodSets>; BRANCHES],
) -> Result<[Var; BRANCHES]> {
    let mut out = [input; BRANCHES];
    for b in 0..BRANCHES {
        let att = attention_edges(tape, input, params[b], &neighborhoods[b])?;
        let agg = tape.edge_aggregate(att.alpha, att.encoded, &neighborhoods[b])?;
        out[b] = tape.relu(agg);
    }
    Ok(out)
}

/// Weighted sum of the four local representations.
pub fn local_output(
    tape: &mut Tape,
    z: &[[Var; LAYERS]; BRANCHES],
    lambdas: &[[Var; LAYERS]; BRANCHES],
) -> Result<Var> {
    // summed per layer first so unit weights reproduce Z^(1) + Z^(2) bit for bit
    let mut acc: Option<Var> = None;
    for l in 0..LAYERS {
        let mut layer: Option<Var> = None;
        for b in 0..BRANCHES {
            let term = tape.scalar_mul(lambdas[b][l], z[b][l])?;
            layer = Some(match layer {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        let layer = layer.expect("at least one branch");
        acc = Some(match acc {
            None => layer,
            Some(a) => tape.add(a, layer)?,
        });
    }
    Ok(acc.expect("at least one term"))
}

/// Two global layers over adjacency `a`, the second consuming the first:
/// `relu(A relu(A X W1) W2)`.
pub fn global_forward(tape: &mut Tape, a: Var, x: Var, weights: &[Var; LAYERS]) -> Result<Var> {
    let ax = tape.matmul(a, x)?;
    let h1 = tape.matmul(ax, weights[0])?;
    let z1 = tape.relu(h1);
    let zw = tape.matmul(z1, weights[1])?;
    let h2 = tape.matmul(a, zw)?;
    Ok(tape.relu(h2))
}

/// `O = lambda_loc * Z_hat_loc + lambda_glo * Z_glo`, or just the local term
/// when the global level is disabled.
pub fn fuse(
    tape: &mut Tape,
    z_hat_loc: Var,
    z_glo: Option<Var>,
    lambda_loc: Var,
    lambda_glo: Var,
) -> Result<Var> {
    let local = tape.scalar_mul(lambda_loc, z_hat_loc)?;
    match z_glo {
        None => Ok(local),
        Some(g) => {
            let global = tape.scalar_mul(lambda_glo, g)?;
            tape.add(local, global)
        }
    }
}

/// Cross-entropy of the row-softmax of `o` on the labeled rows.
pub fn classification_loss(tape: &mut Tape, o: Var, sup: &Supervision) -> Result<Var> {
    if sup.ids.is_empty() {
        return Err(Error::Config(
            "classification loss needs labeled nodes".into(),
        ));
    }
    let n_classes = o.shape().1;
    if let Some(&c) = sup.classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Config(format!(
            "class index {c} out of range for {n_classes} outputs"
        )));
    }
    let log_p = tape.log_softmax_rows(o);
    let cols: Vec<usize> = (0..n_classes).collect();
    let picked = tape.gather(log_p, &sup.ids, &cols)?;
    let y = tape.leaf(sup.one_hot(n_classes));
    let masked = tape.mul(picked, y)?;
    let total = tape.sum(masked);
    Ok(tape.scale(total, -1.0))
}

/// `L = L_r + softplus(zeta_raw) * L_c`; returns `(L, zeta)`.
pub fn total_loss(tape: &mut Tape, l_r: Var, l_c: Var, zeta_raw: Var) -> Result<(Var, Var)> {
    let zeta = tape.softplus(zeta_raw);
    let weighted = tape.scalar_mul(zeta, l_c)?;
    Ok((tape.add(l_r, weighted)?, zeta))
}

/// Full forward pass: local layers, fused local output, reconstructed and
/// sparsified adjacency, global layers, output fusion, and the losses when
/// supervision is given.
pub fn forward(
    features: &Matrix,
    neighborhoods: &[Arc<NeighborhoodSets>; BRANCHES],
    params: &ModelParams,
    cfg: &ModelConfig,
    supervision: Option<&Supervision>,
) -> Result<Forward> {
    let n = features.nrows();
    if features.ncols() != cfg.in_features {
        return Err(Error::Shape {
            op: "forward",
            left: features.dim(),
            right: (n, cfg.in_features),
        });
    }
    if neighborhoods.iter().any(|nb| nb.len() != n) {
        return Err(Error::Data(format!(
            "neighborhoods cover {:?} nodes, features have {n}",
            neighborhoods.iter().map(|nb| nb.len()).collect::<Vec<_>>()
        )));
    }

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let x = tape.leaf(features.clone());
    let out = forward_on_tape(&mut tape, x, neighborhoods, &vars, cfg, supervision)?;
    Ok(Forward {
        tape,
        params: vars,
        out,
    })
}

/// Records the forward pass on an existing tape, with parameters already
/// registered as `vars`.
pub fn forward_on_tape(
    tape: &mut Tape,
    x: Var,
    neighborhoods: &[Arc<NeighborhoodSets>; BRANCHES],
    vars: &ParamVars,
    cfg: &ModelConfig,
    supervision: Option<&Supervision>,
) -> Result<ForwardOutput> {
    let local_params = |l: usize| [vars.local[0][l], vars.local[1][l]];
    let layer1 = local_layer(tape, x, &local_params(0), neighborhoods)?;
    let z1 = tape.add(layer1[0], layer1[1])?;
    let layer2 = local_layer(tape, z1, &local_params(1), neighborhoods)?;
    let z = [[layer1[0], layer2[0]], [layer1[1], layer2[1]]];

    let z_loc = local_output(tape, &z, &vars.lambda_local)?;
    let z_hat_loc = tape.matmul(z_loc, vars.output)?;

    let (a_tilde, a, z_glo) = if cfg.global_enabled {
        let a_tilde = reconstruct_adjacency(tape, z_loc);
        let mut a = sparsify(tape, a_tilde, cfg.beta)?;
        if cfg.normalize_adjacency {
            a = tape.row_normalize(a);
        }
        let z_glo = global_forward(tape, a, x, &vars.global)?;
        (Some(a_tilde), Some(a), Some(z_glo))
    } else {
        (None, None, None)
    };

    let o = fuse(tape, z_hat_loc, z_glo, vars.lambda_loc, vars.lambda_glo)?;

    let losses = match supervision {
        None => None,
        Some(sup) => {
            let l_c = classification_loss(tape, o, sup)?;
            let l_r = match a_tilde {
                Some(a_tilde) => reconstruction_loss(
                    tape,
                    a_tilde,
                    &sup.classes,
                    &sup.ids,
                    cfg.mean_reconstruction,
                )?,
                None => tape.scalar_leaf(0.0),
            };
            let (total, zeta) = total_loss(tape, l_r, l_c, vars.zeta_raw)?;
            Some(Losses {
                reconstruction: l_r,
                classification: l_c,
                total,
                zeta,
            })
        }
    };

    Ok(ForwardOutput {
        z,
        z_loc,
        z_hat_loc,
        a_tilde,
        a,
        z_glo,
        o,
        losses,
    })
}
