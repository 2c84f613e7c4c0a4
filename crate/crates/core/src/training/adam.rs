use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

/// Adam moment decay rates and stabilizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for a list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let m: Vec<Matrix> = shapes.into_iter().map(|p| Matrix::zeros(p.dim())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update applied in place. Every gradient is
/// checked before any parameter moves.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    names: &[String],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    let k = params.len();
    if grads.len() != k || state.m.len() != k || names.len() != k {
        return Err(Error::Config(format!(
            "adam_step got {k} params, {} grads, {} moments, {} names",
            grads.len(),
            state.m.len(),
            names.len()
        )));
    }
    for i in 0..k {
        if grads[i].dim() != params[i].dim() || state.m[i].dim() != params[i].dim() {
            return Err(Error::Shape {
                op: "adam_step",
                left: params[i].dim(),
                right: grads[i].dim(),
            });
        }
        if grads[i].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(names[i].clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..k {
        ndarray::Zip::from(&mut *params[i])
            .and(&mut state.m[i])
            .and(&mut state.v[i])
            .and(&grads[i])
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            });
    }
    Ok(())
}
