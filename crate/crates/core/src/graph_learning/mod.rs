//! Automatic graph learning.
//!
//! Locally, each node attends over its spatial neighborhood with scores
//! `LeakyReLU(a^T [W h_i || W h_j])` normalized by a softmax over the
//! neighborhood. Globally, a dense similarity graph
//! `exp(-||z_i - z_j||^2)` is rebuilt from the learned local features,
//! supervised by a squared-error reconstruction loss on labeled pairs, and
//! thresholded to keep only strong edges.

mod neighborhood;

use std::sync::Arc;

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

pub use neighborhood::NeighborhoodSets;

/// Negative slope of the LeakyReLU applied to attention scores.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Default edge-retention threshold for the reconstructed adjacency.
pub const DEFAULT_BETA: f64 = 0.75;

/// Tape handles for one attention block: `weight` is `d_in x d_out` (row
/// convention, so the encoded features are `H W`), `attn` is `2 d_out x 1`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub weight: Var,
    pub attn: Var,
}

/// Output of [`attention_coefficients`].
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// `n x n`, zero outside the mask, rows summing to one over the mask
    /// (`nnz x 1` from [`attention_edges`]).
    pub alpha: Var,
    /// The encoded features `H W`, reused by the aggregation step.
    pub encoded: Var,
}

fn score_terms(tape: &mut Tape, h: Var, params: AttentionParams) -> Result<(Var, Var, Var)> {
    let encoded = tape.matmul(h, params.weight)?;
    let d_out = encoded.shape().1;
    if params.attn.shape() != (2 * d_out, 1) {
        return Err(Error::Shape {
            op: "attention_coefficients",
            left: params.attn.shape(),
            right: (2 * d_out, 1),
        });
    }
    // a^T [p || q] = a_self^T p + a_nbr^T q
    let a_self = tape.slice_rows(params.attn, 0, d_out)?;
    let a_nbr = tape.slice_rows(params.attn, d_out, 2 * d_out)?;
    let e_self = tape.matmul(encoded, a_self)?;
    let e_nbr = tape.matmul(encoded, a_nbr)?;
    Ok((encoded, e_self, e_nbr))
}

/// Computes the neighborhood-normalized attention coefficients for node
/// features `h`.
pub fn attention_coefficients(
    tape: &mut Tape,
    h: Var,
    params: AttentionParams,
    mask: &Arc<NeighborhoodSets>,
) -> Result<Attention> {
    let (encoded, e_self, e_nbr) = score_terms(tape, h, params)?;
    let scores = tape.outer_sum(e_self, e_nbr)?;
    let activated = tape.leaky_relu(scores, LEAKY_SLOPE)?;
    let alpha = tape.masked_softmax(activated, mask)?;
    Ok(Attention { alpha, encoded })
}

/// Same coefficients as [`attention_coefficients`], bit for bit, but with
/// `alpha` as an `nnz x 1` column over the mask's edges (rows in order,
/// neighbors in list order). Work is linear in the number of edges.
pub fn attention_edges(
    tape: &mut Tape,
    h: Var,
    params: AttentionParams,
    mask: &Arc<NeighborhoodSets>,
) -> Result<Attention> {
    let (encoded, e_self, e_nbr) = score_terms(tape, h, params)?;
    let scores = tape.edge_scores(e_self, e_nbr, mask)?;
    let activated = tape.leaky_relu(scores, LEAKY_SLOPE)?;
    let alpha = tape.edge_softmax(activated, mask)?;
    Ok(Attention { alpha, encoded })
}

/// Dense similarity graph `exp(-||z_i - z_j||^2)`: symmetric, unit diagonal.
pub fn reconstruct_adjacency(tape: &mut Tape, z_loc: Var) -> Var {
    let d = tape.row_sq_dist(z_loc);
    let neg = tape.scale(d, -1.0);
    tape.exp(neg)
}

/// Keeps edges with similarity `>= beta`. `beta = 0` keeps every edge.
pub fn sparsify(tape: &mut Tape, a_tilde: Var, beta: f64) -> Result<Var> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Config(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    Ok(tape.sparsify(a_tilde, beta))
}

/// Squared error between `a_tilde` and the same-class indicator, summed over
/// all ordered pairs of labeled nodes (self-pairs included). `classes[k]` is
/// the class of `labeled_ids[k]`. With `mean` the sum is divided by the
/// number of pairs.
pub fn reconstruction_loss(
    tape: &mut Tape,
    a_tilde: Var,
    classes: &[usize],
    labeled_ids: &[usize],
    mean: bool,
) -> Result<Var> {
    if labeled_ids.is_empty() {
        return Err(Error::Config(
            "reconstruction loss needs labeled nodes".into(),
        ));
    }
    if classes.len() != labeled_ids.len() {
        return Err(Error::Shape {
            op: "reconstruction_loss",
            left: (classes.len(), 1),
            right: (labeled_ids.len(), 1),
        });
    }
    let k = labeled_ids.len();
    let sub = tape.gather(a_tilde, labeled_ids, labeled_ids)?;
    let target = tape.leaf(Matrix::from_shape_fn((k, k), |(p, q)| {
        if classes[p] == classes[q] {
            1.0
        } else {
            0.0
        }
    }));
    let diff = tape.sub(sub, target)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(if mean {
        tape.scale(total, 1.0 / (k * k) as f64)
    } else {
        total
    })
}
