//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation in insertion order; since an operation
//! can only consume nodes that already exist, insertion order is a valid
//! topological order and [`Tape::backward`] simply walks it in reverse.
//!
//! The op set is deliberately small: exactly what the graph model needs,
//! plus the neighborhood-restricted softmax and aggregation used by the
//! attention layers.

mod check;
mod ops;

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};
use crate::graph_learning::NeighborhoodSets;

pub use check::{finite_difference_check, FnGraph};
pub use ops::softplus as softplus_value;

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScalarMul {
        scalar: Var,
        x: Var,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Sum(Var),
    RowSqDist(Var),
    OuterSum(Var, Var),
    MaskedSoftmax(Var, Arc<NeighborhoodSets>),
    NeighborAggregate {
        weights: Var,
        values: Var,
        mask: Arc<NeighborhoodSets>,
    },
    EdgeScores(Var, Var, Arc<NeighborhoodSets>),
    EdgeSoftmax(Var, Arc<NeighborhoodSets>),
    EdgeAggregate {
        weights: Var,
        values: Var,
        mask: Arc<NeighborhoodSets>,
    },
    Sparsify(Var, f64),
    ConcatRows(Var, Var),
    SliceRows(Var, usize),
    Gather {
        x: Var,
        rows: Arc<[usize]>,
        cols: Arc<[usize]>,
    },
    LogSoftmaxRows(Var),
    RowNormalize(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`; zero when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match self.adjoints.get(v.id).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes.get(v.id).copied().unwrap_or(v.shape());
                Matrix::zeros((r, c))
            }
        }
    }

    pub fn is_reachable(&self, v: Var) -> bool {
        matches!(self.adjoints.get(v.id), Some(Some(_)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input (parameter or constant). Whether it is "trainable"
    /// is the caller's business: every leaf receives an adjoint.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> Var {
        self.leaf(Matrix::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.id].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.id].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let (rows, cols) = value.dim();
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        Var { id, rows, cols }
    }

    /// Propagates adjoints from a scalar `loss` back to every node it
    /// depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = loss.shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.id + 1];
        adj[loss.id] = Some(Matrix::ones((1, 1)));

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.propagate(id, &g, &mut adj);
            adj[id] = Some(g);
        }

        adj.resize(self.nodes.len(), None);
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
        })
    }

    fn propagate(&self, id: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let out = &self.nodes[id].value;
        let val = |v: Var| &self.nodes[v.id].value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                accumulate(adj, *a, g.dot(&val(*b).t()));
                accumulate(adj, *b, val(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, -g);
            }
            Op::Mul(a, b) => {
                accumulate(adj, *a, g * val(*b));
                accumulate(adj, *b, g * val(*a));
            }
            Op::Scale(x, c) => accumulate(adj, *x, g * *c),
            Op::ScalarMul { scalar, x } => {
                let s = val(*scalar)[[0, 0]];
                let gs = (g * val(*x)).sum();
                accumulate(adj, *scalar, Matrix::from_elem((1, 1), gs));
                accumulate(adj, *x, g * s);
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|gi, &xi| {
                    if xi <= 0.0 {
                        *gi = 0.0;
                    }
                });
                accumulate(adj, *x, gx);
            }
            Op::LeakyRelu(x, slope) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|gi, &xi| {
                    if xi <= 0.0 {
                        *gi *= slope;
                    }
                });
                accumulate(adj, *x, gx);
            }
            Op::Exp(x) => accumulate(adj, *x, g * out),
            Op::Log(x) => accumulate(adj, *x, g / val(*x)),
            Op::Softplus(x) => {
                let gx = Zip::from(g)
                    .and(val(*x))
                    .map_collect(|&gi, &xi| gi * sigmoid(xi));
                accumulate(adj, *x, gx);
            }
            Op::Sum(x) => {
                let (r, c) = x.shape();
                accumulate(adj, *x, Matrix::from_elem((r, c), g[[0, 0]]));
            }
            Op::RowSqDist(zv) => {
                // d/dz_i = sum_j w_ij (z_i - z_j) with w = 2 (G + G^T)
                let z = val(*zv);
                let w = (g + &g.t()) * 2.0;
                let degree = w.sum_axis(Axis(1)).insert_axis(Axis(1));
                let gz = z * &degree - w.dot(z);
                accumulate(adj, *zv, gz);
            }
            Op::OuterSum(e, f) => {
                accumulate(adj, *e, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                accumulate(adj, *f, g.sum_axis(Axis(0)).insert_axis(Axis(1)));
            }
            Op::MaskedSoftmax(x, mask) => {
                let mut gx = Matrix::zeros(out.dim());
                for (i, nbrs) in mask.iter().enumerate() {
                    let dot: f64 = nbrs.iter().map(|&j| g[[i, j]] * out[[i, j]]).sum();
                    for &j in nbrs {
                        gx[[i, j]] = out[[i, j]] * (g[[i, j]] - dot);
                    }
                }
                accumulate(adj, *x, gx);
            }
            Op::NeighborAggregate {
                weights,
                values,
                mask,
            } => {
                let w = val(*weights);
                let v = val(*values);
                let mut gw = Matrix::zeros(w.dim());
                let mut gv = Matrix::zeros(v.dim());
                for (i, nbrs) in mask.iter().enumerate() {
                    let gi = g.row(i);
                    for &j in nbrs {
                        gw[[i, j]] = gi.dot(&v.row(j));
                        let wij = w[[i, j]];
                        Zip::from(gv.row_mut(j))
                            .and(&gi)
                            .for_each(|a, &b| *a += wij * b);
                    }
                }
                accumulate(adj, *weights, gw);
                accumulate(adj, *values, gv);
            }
            Op::EdgeScores(e, f, mask) => {
                let mut ge = Matrix::zeros((mask.len(), 1));
                let mut gf = Matrix::zeros((f.rows, 1));
                let mut k = 0;
                for (i, nbrs) in mask.iter().enumerate() {
                    for &j in nbrs {
                        ge[[i, 0]] += g[[k, 0]];
                        gf[[j, 0]] += g[[k, 0]];
                        k += 1;
                    }
                }
                accumulate(adj, *e, ge);
                accumulate(adj, *f, gf);
            }
            Op::EdgeSoftmax(x, mask) => {
                let mut gx = Matrix::zeros(out.dim());
                let mut start = 0;
                for nbrs in mask.iter() {
                    let end = start + nbrs.len();
                    let dot: f64 = (start..end).map(|k| g[[k, 0]] * out[[k, 0]]).sum();
                    for k in start..end {
                        gx[[k, 0]] = out[[k, 0]] * (g[[k, 0]] - dot);
                    }
                    start = end;
                }
                accumulate(adj, *x, gx);
            }
            Op::EdgeAggregate {
                weights,
                values,
                mask,
            } => {
                let w = val(*weights);
                let v = val(*values);
                let mut gw = Matrix::zeros(w.dim());
                let mut gv = Matrix::zeros(v.dim());
                let mut k = 0;
                for (i, nbrs) in mask.iter().enumerate() {
                    let gi = g.row(i);
                    for &j in nbrs {
                        gw[[k, 0]] = gi.dot(&v.row(j));
                        let wk = w[[k, 0]];
                        Zip::from(gv.row_mut(j))
                            .and(&gi)
                            .for_each(|a, &b| *a += wk * b);
                        k += 1;
                    }
                }
                accumulate(adj, *weights, gw);
                accumulate(adj, *values, gv);
            }
            Op::Sparsify(x, beta) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(val(*x)).for_each(|gi, &xi| {
                    if xi < *beta {
                        *gi = 0.0;
                    }
                });
                accumulate(adj, *x, gx);
            }
            Op::ConcatRows(a, b) => {
                let split = a.shape().0;
                accumulate(adj, *a, g.slice(s![..split, ..]).to_owned());
                accumulate(adj, *b, g.slice(s![split.., ..]).to_owned());
            }
            Op::SliceRows(x, start) => {
                let mut gx = Matrix::zeros(x.shape());
                gx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                accumulate(adj, *x, gx);
            }
            Op::Gather { x, rows, cols } => {
                let mut gx = Matrix::zeros(x.shape());
                for (p, &r) in rows.iter().enumerate() {
                    for (q, &c) in cols.iter().enumerate() {
                        gx[[r, c]] += g[[p, q]];
                    }
                }
                accumulate(adj, *x, gx);
            }
            Op::LogSoftmaxRows(x) => {
                let mut gx = g.clone();
                for (mut gr, yr) in gx.outer_iter_mut().zip(out.outer_iter()) {
                    let total = gr.sum();
                    Zip::from(&mut gr)
                        .and(&yr)
                        .for_each(|a, &y| *a -= y.exp() * total);
                }
                accumulate(adj, *x, gx);
            }
            Op::RowNormalize(x) => {
                let xv = val(*x);
                let mut gx = Matrix::zeros(xv.dim());
                for i in 0..xv.nrows() {
                    let r = xv.row(i).sum();
                    if r == 0.0 {
                        continue;
                    }
                    let dot = g.row(i).dot(&out.row(i));
                    Zip::from(gx.row_mut(i))
                        .and(&g.row(i))
                        .for_each(|a, &gi| *a = (gi - dot) / r);
                }
                accumulate(adj, *x, gx);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.id] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
