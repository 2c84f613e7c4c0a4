use super::{Matrix, Tape, Var};
use crate::error::Result;

/// A scalar function expressed as a graph builder: given leaf handles for
/// the parameters, record the computation on the tape and return the 1x1
/// output node.
pub trait FnGraph: Fn(&mut Tape, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Tape, &[Var]) -> Result<Var>> FnGraph for F {}

fn evaluate<F: FnGraph>(f: &F, params: &[Matrix]) -> Result<(Tape, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    Ok((tape, leaves, out))
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h`, returning the largest `|analytic - numeric| / max(1, |analytic|)`
/// over every coordinate of every parameter.
///
/// Points where `f` has a kink must be avoided by the caller.
pub fn finite_difference_check<F: FnGraph>(f: F, params: &[Matrix], h: f64) -> Result<f64> {
    let (tape, leaves, out) = evaluate(&f, params)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for (p, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(*leaf);
        for idx in ndarray::indices(params[p].dim()) {
            let orig = params[p][idx];
            probe[p][idx] = orig + h;
            let (t_plus, _, o_plus) = evaluate(&f, &probe)?;
            probe[p][idx] = orig - h;
            let (t_minus, _, o_minus) = evaluate(&f, &probe)?;
            probe[p][idx] = orig;

            let numeric = (t_plus.scalar(o_plus) - t_minus.scalar(o_minus)) / (2.0 * h);
            let a = analytic[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
