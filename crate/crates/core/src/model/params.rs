use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::data_io::Checkpoint;
use crate::error::{Error, Result};

pub const BRANCHES: usize = 2;
pub const LAYERS: usize = 2;

/// Architecture of the network. Two branches and two layers per level are
/// fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    /// Spectral bands of the region features.
    pub in_features: usize,
    /// Hidden units `u` of every local layer and of the first global layer.
    pub hidden: usize,
    /// Hop counts of the two local branches; `hops[0] < hops[1]`.
    pub hops: [usize; 2],
    /// Edge-retention threshold of the reconstructed adjacency.
    pub beta: f64,
    /// `false` drops the global level (the local-only ablation).
    pub global_enabled: bool,
    /// Row-normalize the sparsified adjacency before global convolution.
    #[serde(default)]
    pub normalize_adjacency: bool,
    /// Average the reconstruction loss over labeled pairs instead of summing.
    #[serde(default)]
    pub mean_reconstruction: bool,
}

impl ModelConfig {
    pub fn new(n_classes: usize, in_features: usize) -> Self {
        Self {
            n_classes,
            in_features,
            hidden: 128,
            hops: [1, 4],
            beta: crate::graph_learning::DEFAULT_BETA,
            global_enabled: true,
            normalize_adjacency: false,
            mean_reconstruction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.hidden == 0 || self.in_features == 0 {
            return Err(Error::Config(
                "hidden units and input features must be >= 1".into(),
            ));
        }
        if !(1 <= self.hops[0] && self.hops[0] < self.hops[1]) {
            return Err(Error::Config(format!(
                "hop sizes must satisfy 1 <= s1 < s2, got {:?}",
                self.hops
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Name used in reports.
    pub fn variant_name(&self) -> &'static str {
        if self.global_enabled {
            "MGCN-AGL"
        } else {
            "MGCN-AGL-Loc"
        }
    }
}

/// Encoder and attention vector of one (branch, layer) block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `d_in x u`
    pub weight: Matrix,
    /// `2u x 1`
    pub attn: Matrix,
}

/// All learnable parameters. Scalars are stored as 1x1 matrices so that the
/// optimizer and checkpoints treat every entry uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Indexed `[branch][layer]`.
    pub local: [[LayerParams; LAYERS]; BRANCHES],
    /// `B x u` and `u x C`.
    pub global: [Matrix; LAYERS],
    /// `u x C` projection of the local output.
    pub output: Matrix,
    /// Fusion weight of each local representation, `[branch][layer]`.
    pub lambda_local: [[Matrix; LAYERS]; BRANCHES],
    pub lambda_loc: Matrix,
    pub lambda_glo: Matrix,
    /// Pre-softplus weight of the cross-entropy term.
    pub zeta_raw: Matrix,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..=limit))
}

fn scalar(v: f64) -> Matrix {
    Matrix::from_elem((1, 1), v)
}

/// `softplus^-1(1) = ln(e - 1)`.
pub const ZETA_RAW_INIT: f64 = 0.541_324_854_612_918_1;

impl ModelParams {
    /// Glorot-uniform weights, attention vectors uniform in `[-0.01, 0.01]`,
    /// fusion weights 1, and `zeta = 1`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, u, c) = (cfg.in_features, cfg.hidden, cfg.n_classes);
        let block = |d_in: usize, rng: &mut ChaCha8Rng| LayerParams {
            weight: glorot(rng, d_in, u),
            attn: Matrix::from_shape_simple_fn((2 * u, 1), || rng.gen_range(-0.01..=0.01)),
        };
        let local = [
            [block(b, &mut rng), block(u, &mut rng)],
            [block(b, &mut rng), block(u, &mut rng)],
        ];
        let global = [glorot(&mut rng, b, u), glorot(&mut rng, u, c)];
        let output = glorot(&mut rng, u, c);
        Ok(Self {
            local,
            global,
            output,
            lambda_local: std::array::from_fn(|_| std::array::from_fn(|_| scalar(1.0))),
            lambda_loc: scalar(1.0),
            lambda_glo: scalar(1.0),
            zeta_raw: scalar(ZETA_RAW_INIT),
        })
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (b, layers) in self.local.iter().enumerate() {
            for (l, p) in layers.iter().enumerate() {
                out.push((format!("local.b{}.l{}.weight", b + 1, l + 1), &p.weight));
                out.push((format!("local.b{}.l{}.attn", b + 1, l + 1), &p.attn));
            }
        }
        for (l, w) in self.global.iter().enumerate() {
            out.push((format!("global.l{}.weight", l + 1), w));
        }
        out.push(("output.weight".into(), &self.output));
        for (b, layers) in self.lambda_local.iter().enumerate() {
            for (l, v) in layers.iter().enumerate() {
                out.push((format!("lambda.b{}.l{}", b + 1, l + 1), v));
            }
        }
        out.push(("lambda.loc".into(), &self.lambda_loc));
        out.push(("lambda.glo".into(), &self.lambda_glo));
        out.push(("zeta_raw".into(), &self.zeta_raw));
        out
    }

    /// Mutable view in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for layers in self.local.iter_mut() {
            for p in layers.iter_mut() {
                out.push(&mut p.weight);
                out.push(&mut p.attn);
            }
        }
        for w in self.global.iter_mut() {
            out.push(w);
        }
        out.push(&mut self.output);
        for layers in self.lambda_local.iter_mut() {
            for v in layers.iter_mut() {
                out.push(v);
            }
        }
        out.push(&mut self.lambda_loc);
        out.push(&mut self.lambda_glo);
        out.push(&mut self.zeta_raw);
        out
    }

    pub fn to_named(&self) -> Vec<(String, Matrix)> {
        self.tensors()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect()
    }

    /// Rebuilds parameters from named tensors, checking every shape against
    /// `cfg`.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: &ModelConfig) -> Result<Self> {
        let mut params = Self::init(cfg, 0)?;
        let names: Vec<(String, (usize, usize))> = params
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.dim()))
            .collect();
        if ckpt.tensors.len() != names.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                ckpt.tensors.len(),
                names.len()
            )));
        }
        for ((name, shape), slot) in names.iter().zip(params.tensors_mut()) {
            let m = ckpt
                .get(name)
                .ok_or_else(|| Error::Data(format!("checkpoint is missing `{name}`")))?;
            if m.dim() != *shape {
                return Err(Error::Shape {
                    op: "load_checkpoint",
                    left: m.dim(),
                    right: *shape,
                });
            }
            *slot = m.clone();
        }
        Ok(params)
    }

    /// Effective cross-entropy weight `softplus(zeta_raw)`.
    pub fn zeta(&self) -> f64 {
        crate::autodiff::softplus_value(self.zeta_raw[[0, 0]])
    }

    /// Records every tensor as a leaf on `tape`.
    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let mut leaf = |m: &Matrix| tape.leaf(m.clone());
        let local = std::array::from_fn(|b| {
            std::array::from_fn(|l| crate::graph_learning::AttentionParams {
                weight: leaf(&self.local[b][l].weight),
                attn: leaf(&self.local[b][l].attn),
            })
        });
        let global = std::array::from_fn(|l| leaf(&self.global[l]));
        let output = leaf(&self.output);
        let lambda_local =
            std::array::from_fn(|b| std::array::from_fn(|l| leaf(&self.lambda_local[b][l])));
        ParamVars {
            local,
            global,
            output,
            lambda_local,
            lambda_loc: leaf(&self.lambda_loc),
            lambda_glo: leaf(&self.lambda_glo),
            zeta_raw: leaf(&self.zeta_raw),
        }
    }
}

/// Tape handles mirroring [`ModelParams`].
#[derive(Clone, Copy, Debug)]
pub struct ParamVars {
    pub local: [[crate::graph_learning::AttentionParams; LAYERS]; BRANCHES],
    pub global: [Var; LAYERS],
    pub output: Var,
    pub lambda_local: [[Var; LAYERS]; BRANCHES],
    pub lambda_loc: Var,
    pub lambda_glo: Var,
    pub zeta_raw: Var,
}

impl ParamVars {
    /// Handles in the order of [`ModelParams::tensors`].
    pub fn in_order(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for layers in &self.local {
            for p in layers {
                out.push(p.weight);
                out.push(p.attn);
            }
        }
        out.extend(self.global);
        out.push(self.output);
        for layers in &self.lambda_local {
            out.extend(layers.iter().copied());
        }
        out.extend([self.lambda_loc, self.lambda_glo, self.zeta_raw]);
        out
    }

    /// Inverse of [`ParamVars::in_order`].
    pub fn from_order(vars: &[Var]) -> Result<Self> {
        const COUNT: usize = 2 * BRANCHES * LAYERS + LAYERS + 1 + BRANCHES * LAYERS + 3;
        if vars.len() != COUNT {
            return Err(Error::Config(format!(
                "expected {COUNT} parameter handles, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let local = std::array::from_fn(|_| {
            std::array::from_fn(|_| crate::graph_learning::AttentionParams {
                weight: next(),
                attn: next(),
            })
        });
        let global = std::array::from_fn(|_| next());
        let output = next();
        let lambda_local = std::array::from_fn(|_| std::array::from_fn(|_| next()));
        Ok(Self {
            local,
            global,
            output,
            lambda_local,
            lambda_loc: next(),
            lambda_glo: next(),
            zeta_raw: next(),
        })
    }
}
