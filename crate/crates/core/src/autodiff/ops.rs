use std::sync::Arc;

use ndarray::{concatenate, s, Axis, Zip};

use super::{Matrix, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::graph_learning::NeighborhoodSets;

fn same_shape(op: &'static str, a: Var, b: Var) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn square_mask(op: &'static str, x: Var, mask: &NeighborhoodSets) -> Result<()> {
    let n = mask.len();
    if x.shape() != (n, n) {
        return Err(Error::Shape {
            op,
            left: x.shape(),
            right: (n, n),
        });
    }
    Ok(())
}

impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.cols != b.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        self.push(out, Op::Scale(x, c))
    }

    /// Multiplication by a differentiable 1x1 node.
    pub fn scalar_mul(&mut self, scalar: Var, x: Var) -> Result<Var> {
        if scalar.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "scalar_mul",
                left: scalar.shape(),
                right: (1, 1),
            });
        }
        let out = self.value(x) * self.scalar(scalar);
        Ok(self.push(out, Op::ScalarMul { scalar, x }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// `max(x, slope * x)`; the derivative at exactly zero is `slope`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&slope) {
            return Err(Error::Config(format!(
                "leaky_relu slope must lie in [0, 1), got {slope}"
            )));
        }
        let out = self.value(x).mapv(|v| if v > 0.0 { v } else { slope * v });
        Ok(self.push(out, Op::LeakyRelu(x, slope)))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::ln);
        self.push(out, Op::Log(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(softplus);
        self.push(out, Op::Softplus(x))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::from_elem((1, 1), self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Pairwise squared Euclidean distances between rows, from the Gram
    /// matrix and clamped at zero. The result is exactly symmetric with a zero
    /// diagonal.
    pub fn row_sq_dist(&mut self, z: Var) -> Var {
        let zv = self.value(z);
        let n = zv.nrows();
        let gram = zv.dot(&zv.t());
        let mut out = Matrix::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(0.0);
                out[[i, j]] = d;
                out[[j, i]] = d;
            }
        }
        self.push(out, Op::RowSqDist(z))
    }

    /// `out[i][j] = e[i] + f[j]` for column vectors `e` (n x 1) and `f` (m x 1).
    pub fn outer_sum(&mut self, e: Var, f: Var) -> Result<Var> {
        if e.cols != 1 || f.cols != 1 {
            return Err(Error::Shape {
                op: "outer_sum",
                left: e.shape(),
                right: f.shape(),
            });
        }
        let ev = self.value(e).column(0);
        let fv = self.value(f).column(0);
        let mut out = Matrix::zeros((e.rows, f.rows));
        for (mut row, &ei) in out.outer_iter_mut().zip(ev.iter()) {
            Zip::from(&mut row).and(&fv).for_each(|o, &fj| *o = ei + fj);
        }
        Ok(self.push(out, Op::OuterSum(e, f)))
    }

    /// Row-wise softmax restricted to each row's neighborhood; entries
    /// outside the neighborhood are exactly zero. Uses per-row max
    /// subtraction.
    pub fn masked_softmax(&mut self, scores: Var, mask: &Arc<NeighborhoodSets>) -> Result<Var> {
        square_mask("masked_softmax", scores, mask)?;
        let sv = self.value(scores);
        let mut out = Matrix::zeros(sv.dim());
        for (i, nbrs) in mask.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(Error::DegenerateRow { row: i });
            }
            let max = nbrs
                .iter()
                .map(|&j| sv[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &j in nbrs {
                let e = (sv[[i, j]] - max).exp();
                out[[i, j]] = e;
                total += e;
            }
            for &j in nbrs {
                out[[i, j]] /= total;
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax(scores, Arc::clone(mask))))
    }

    /// `out[i] = sum_{j in N(i)} weights[i][j] * values[j]`. Entries of
    /// `weights` outside the mask are ignored and receive no gradient.
    pub fn neighbor_aggregate(
        &mut self,
        weights: Var,
        values: Var,
        mask: &Arc<NeighborhoodSets>,
    ) -> Result<Var> {
        square_mask("neighbor_aggregate", weights, mask)?;
        if values.rows != mask.len() {
            return Err(Error::Shape {
                op: "neighbor_aggregate",
                left: weights.shape(),
                right: values.shape(),
            });
        }
        let w = self.value(weights);
        let v = self.value(values);
        let mut out = Matrix::zeros((v.nrows(), v.ncols()));
        for (i, nbrs) in mask.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in nbrs {
                let wij = w[[i, j]];
                Zip::from(&mut row)
                    .and(&v.row(j))
                    .for_each(|o, &x| *o += wij * x);
            }
        }
        Ok(self.push(
            out,
            Op::NeighborAggregate {
                weights,
                values,
                mask: Arc::clone(mask),
            },
        ))
    }

    /// Edge form of [`Tape::outer_sum`]: a column with `e[i] + f[j]` for every
    /// pair `(i, j)` of the mask, rows in order and neighbors in list order.
    pub fn edge_scores(&mut self, e: Var, f: Var, mask: &Arc<NeighborhoodSets>) -> Result<Var> {
        if e.cols != 1 || f.cols != 1 || e.rows != mask.len() || f.rows != mask.len() {
            return Err(Error::Shape {
                op: "edge_scores",
                left: e.shape(),
                right: f.shape(),
            });
        }
        let ev = self.value(e);
        let fv = self.value(f);
        let mut out = Vec::with_capacity(mask.nnz());
        for (i, nbrs) in mask.iter().enumerate() {
            out.extend(nbrs.iter().map(|&j| ev[[i, 0]] + fv[[j, 0]]));
        }
        let out = Matrix::from_shape_vec((out.len(), 1), out).expect("column");
        Ok(self.push(out, Op::EdgeScores(e, f, Arc::clone(mask))))
    }

    /// Edge form of [`Tape::masked_softmax`]: softmax over each row's slice
    /// of an edge column.
    pub fn edge_softmax(&mut self, scores: Var, mask: &Arc<NeighborhoodSets>) -> Result<Var> {
        if scores.shape() != (mask.nnz(), 1) {
            return Err(Error::Shape {
                op: "edge_softmax",
                left: scores.shape(),
                right: (mask.nnz(), 1),
            });
        }
        let sv = self.value(scores);
        let mut out = Matrix::zeros(sv.dim());
        let mut start = 0;
        for (i, nbrs) in mask.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(Error::DegenerateRow { row: i });
            }
            let end = start + nbrs.len();
            let max = (start..end)
                .map(|k| sv[[k, 0]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in start..end {
                let e = (sv[[k, 0]] - max).exp();
                out[[k, 0]] = e;
                total += e;
            }
            for k in start..end {
                out[[k, 0]] /= total;
            }
            start = end;
        }
        Ok(self.push(out, Op::EdgeSoftmax(scores, Arc::clone(mask))))
    }

    /// Edge form of [`Tape::neighbor_aggregate`] with weights given as an
    /// edge column.
    pub fn edge_aggregate(
        &mut self,
        weights: Var,
        values: Var,
        mask: &Arc<NeighborhoodSets>,
    ) -> Result<Var> {
        if weights.shape() != (mask.nnz(), 1) || values.rows != mask.len() {
            return Err(Error::Shape {
                op: "edge_aggregate",
                left: weights.shape(),
                right: values.shape(),
            });
        }
        let w = self.value(weights);
        let v = self.value(values);
        let mut out = Matrix::zeros((v.nrows(), v.ncols()));
        let mut k = 0;
        for (i, nbrs) in mask.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in nbrs {
                let wk = w[[k, 0]];
                Zip::from(&mut row)
                    .and(&v.row(j))
                    .for_each(|o, &x| *o += wk * x);
                k += 1;
            }
        }
        Ok(self.push(
            out,
            Op::EdgeAggregate {
                weights,
                values,
                mask: Arc::clone(mask),
            },
        ))
    }

    /// Keeps entries `>= beta`, zeroes the rest. The gate is hard: no
    /// gradient reaches `beta` and none flows through dropped entries.
    pub fn sparsify(&mut self, x: Var, beta: f64) -> Var {
        let out = self.value(x).mapv(|v| if v >= beta { v } else { 0.0 });
        self.push(out, Op::Sparsify(x, beta))
    }

    /// Stacks `a` on top of `b`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.cols != b.cols {
            return Err(Error::Shape {
                op: "concat_rows",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let out = concatenate(Axis(0), &[self.value(a).view(), self.value(b).view()])
            .expect("column counts checked");
        Ok(self.push(out, Op::ConcatRows(a, b)))
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        if start > end || end > x.rows {
            return Err(Error::Shape {
                op: "slice_rows",
                left: x.shape(),
                right: (start, end),
            });
        }
        let out = self.value(x).slice(s![start..end, ..]).to_owned();
        Ok(self.push(out, Op::SliceRows(x, start)))
    }

    /// Submatrix `x[rows, cols]`. Indices may repeat; gradients are
    /// scatter-added back.
    pub fn gather(&mut self, x: Var, rows: &[usize], cols: &[usize]) -> Result<Var> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows) {
            return Err(Error::Shape {
                op: "gather",
                left: x.shape(),
                right: (bad, 0),
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols) {
            return Err(Error::Shape {
                op: "gather",
                left: x.shape(),
                right: (0, bad),
            });
        }
        let xv = self.value(x);
        let out = Matrix::from_shape_fn((rows.len(), cols.len()), |(p, q)| xv[[rows[p], cols[q]]]);
        Ok(self.push(
            out,
            Op::Gather {
                x,
                rows: rows.into(),
                cols: cols.into(),
            },
        ))
    }

    /// Row-wise `x - logsumexp(x)`.
    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for mut row in out.outer_iter_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.fold(0.0, |acc, &v| acc + (v - max).exp()).ln();
            row.mapv_inplace(|v| v - lse);
        }
        self.push(out, Op::LogSoftmaxRows(x))
    }

    /// Divides each row by its sum; all-zero rows stay zero.
    pub fn row_normalize(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for mut row in out.outer_iter_mut() {
            let total = row.sum();
            if total != 0.0 {
                row.mapv_inplace(|v| v / total);
            }
        }
        self.push(out, Op::RowNormalize(x))
    }
}

/// `ln(1 + e^x)` on a plain number.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
