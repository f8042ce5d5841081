//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive evaluates eagerly and appends a node holding its value
//! and whatever it needs for the backward pass. `Tape::backward` consumes
//! the tape and walks the nodes in exact reverse recording order, so the
//! reduction order (and therefore every gradient bit) is fixed for a given
//! sequence of calls.

use crate::engine::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    ConstMatMul(&'g Matrix, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    RowSoftmax(Var),
    MaskedSpmm {
        adj: &'g Adjacency,
        mask: Var,
        h: Var,
    },
    GcnSpmm {
        adj: &'g Adjacency,
        mask: Var,
        h: Var,
        inv_sqrt_deg: Vec<f64>,
        through_degree: bool,
    },
    SoftmaxCe {
        logits: Var,
        labels: &'g [usize],
        index: &'g [usize],
        probs: Matrix,
    },
}

struct Node<'g> {
    value: Matrix,
    requires_grad: bool,
    op: Op<'g>,
}

#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn finite(m: Matrix, op: &'static str) -> Result<Matrix> {
    if m.all_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op<'g>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Result<Var> {
        let value = finite(value, "leaf")?;
        Ok(self.push(value, requires_grad, Op::Leaf))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = finite(self.value(a).matmul(self.value(b))?, "matmul")?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, rg, Op::MatMul(a, b)))
    }

    /// `lhs · b` with a constant left operand borrowed rather than copied
    /// onto the tape (the feature matrix, typically).
    pub fn const_matmul(&mut self, lhs: &'g Matrix, b: Var) -> Result<Var> {
        let out = finite(lhs.matmul(self.value(b))?, "const_matmul")?;
        let rg = self.rg(b);
        Ok(self.push(out, rg, Op::ConstMatMul(lhs, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.check_same_shape(vb, "add")?;
        let mut out = va.clone();
        out.add_assign(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(finite(out, "add")?, rg, Op::Add(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        va.check_same_shape(vb, "mul")?;
        let mut out = va.clone();
        for (o, &y) in out.as_mut_slice().iter_mut().zip(vb.as_slice()) {
            *o *= y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(finite(out, "mul")?, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = finite(self.value(a).map(|v| v * factor), "scale")?;
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Scale(a, factor)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::Relu(a)))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let out = finite(softmax_rows(self.value(a)), "row_softmax")?;
        let rg = self.rg(a);
        Ok(self.push(out, rg, Op::RowSoftmax(a)))
    }

    /// `(A ⊙ M) · h` where each undirected edge contributes its mask value in
    /// both directions. `mask` is a `num_edges × 1` column.
    pub fn masked_spmm(&mut self, adj: &'g Adjacency, mask: Var, h: Var) -> Result<Var> {
        let (m, hv) = (self.value(mask), self.value(h));
        check_spmm_shapes(adj, m, hv)?;
        let out = finite(spmm(adj, m.as_slice(), hv, None), "masked_spmm")?;
        let rg = self.rg(mask) || self.rg(h);
        Ok(self.push(out, rg, Op::MaskedSpmm { adj, mask, h }))
    }

    /// Symmetric-normalized propagation `D̃^{-1/2}(A ⊙ M + I)D̃^{-1/2} · h`
    /// with `D̃ = rowsum(A ⊙ M) + 1`. When `through_degree` is false the
    /// degree is treated as a constant during backward.
    pub fn gcn_spmm(&mut self, adj: &'g Adjacency, mask: Var, h: Var, through_degree: bool) -> Result<Var> {
        let (m, hv) = (self.value(mask), self.value(h));
        check_spmm_shapes(adj, m, hv)?;
        let inv_sqrt_deg = inv_sqrt_degree(adj, m.as_slice());
        let out = finite(spmm(adj, m.as_slice(), hv, Some(&inv_sqrt_deg)), "gcn_spmm")?;
        let rg = self.rg(mask) || self.rg(h);
        Ok(self.push(
            out,
            rg,
            Op::GcnSpmm {
                adj,
                mask,
                h,
                inv_sqrt_deg,
                through_degree,
            },
        ))
    }

    /// Mean softmax cross-entropy over the rows listed in `index`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &'g [usize], index: &'g [usize]) -> Result<Var> {
        if index.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: lv.shape(),
                rhs: (labels.len(), 1),
            });
        }
        let classes = lv.cols();
        let mut probs = Matrix::zeros(index.len(), classes);
        let mut loss = 0.0;
        for (k, &i) in index.iter().enumerate() {
            if i >= lv.rows() {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: i,
                    bound: lv.rows(),
                });
            }
            let y = labels[i];
            if y >= classes {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: y,
                    bound: classes,
                });
            }
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + z.ln();
            loss += log_z - row[y];
            for (p, &v) in probs.row_mut(k).iter_mut().zip(row) {
                *p = (v - log_z).exp();
            }
        }
        loss /= index.len() as f64;
        let out = finite(Matrix::filled(1, 1, loss), "softmax_cross_entropy")?;
        let rg = self.rg(logits);
        Ok(self.push(
            out,
            rg,
            Op::SoftmaxCe {
                logits,
                labels,
                index,
                probs,
            },
        ))
    }

    /// Reverse pass from the scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Matrix>> = (0..n).map(|_| None).collect();
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.nodes[loss.0].value.shape(),
                rhs: (1, 1),
            });
        }
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        let nodes = &self.nodes;
        let accumulate = |grads: &mut Vec<Option<Matrix>>, v: Var, g: Matrix| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !g.all_finite() {
                return Err(Error::NonFinite("backward"));
            }
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    if nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g.matmul_t(vb)?);
                    }
                    if nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, va.t_matmul(&g)?);
                    }
                }
                Op::ConstMatMul(lhs, b) => {
                    accumulate(&mut grads, *b, lhs.t_matmul(&g)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    if nodes[a.0].requires_grad {
                        let mut ga = g.clone();
                        for (x, &y) in ga.as_mut_slice().iter_mut().zip(vb.as_slice()) {
                            *x *= y;
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                    if nodes[b.0].requires_grad {
                        let mut gb = g;
                        for (x, &y) in gb.as_mut_slice().iter_mut().zip(va.as_slice()) {
                            *x *= y;
                        }
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads, *a, g.map(|v| v * f));
                }
                Op::Relu(a) => {
                    let va = &nodes[a.0].value;
                    let mut ga = g;
                    for (x, &y) in ga.as_mut_slice().iter_mut().zip(va.as_slice()) {
                        if y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSoftmax(a) => {
                    let s = &node.value;
                    let mut ga = Matrix::zeros(s.rows(), s.cols());
                    for r in 0..s.rows() {
                        let (sr, gr) = (s.row(r), g.row(r));
                        let inner = dot(sr, gr);
                        for (o, (&si, &gi)) in ga.row_mut(r).iter_mut().zip(sr.iter().zip(gr)) {
                            *o = si * (gi - inner);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MaskedSpmm { adj, mask, h } => {
                    let (m, hv) = (&nodes[mask.0].value, &nodes[h.0].value);
                    if nodes[h.0].requires_grad {
                        accumulate(&mut grads, *h, spmm(adj, m.as_slice(), &g, None));
                    }
                    if nodes[mask.0].requires_grad {
                        let gm = adj
                            .edges()
                            .iter()
                            .map(|&(u, v)| dot(g.row(u), hv.row(v)) + dot(g.row(v), hv.row(u)))
                            .collect();
                        accumulate(&mut grads, *mask, Matrix::column(gm));
                    }
                }
                Op::GcnSpmm {
                    adj,
                    mask,
                    h,
                    inv_sqrt_deg: s,
                    through_degree,
                } => {
                    let (m, hv) = (&nodes[mask.0].value, &nodes[h.0].value);
                    if nodes[h.0].requires_grad {
                        accumulate(&mut grads, *h, spmm(adj, m.as_slice(), &g, Some(s)));
                    }
                    if nodes[mask.0].requires_grad {
                        let ms = m.as_slice();
                        let mut gm: Vec<f64> = adj
                            .edges()
                            .iter()
                            .map(|&(u, v)| s[u] * s[v] * (dot(g.row(u), hv.row(v)) + dot(g.row(v), hv.row(u))))
                            .collect();
                        if *through_degree {
                            // dL/ds_i, then ds_i/dm_e = -s_i^3 / 2 for edges incident on i
                            let ds: Vec<f64> = (0..adj.num_nodes())
                                .map(|i| {
                                    let mut acc = 2.0 * s[i] * dot(g.row(i), hv.row(i));
                                    for &(j, e) in adj.neighbors(i) {
                                        acc += ms[e] * s[j] * (dot(g.row(i), hv.row(j)) + dot(g.row(j), hv.row(i)));
                                    }
                                    acc
                                })
                                .collect();
                            for (e, &(u, v)) in adj.edges().iter().enumerate() {
                                gm[e] -= 0.5 * (s[u].powi(3) * ds[u] + s[v].powi(3) * ds[v]);
                            }
                        }
                        accumulate(&mut grads, *mask, Matrix::column(gm));
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    labels,
                    index,
                    probs,
                } => {
                    let lv = &nodes[logits.0].value;
                    let scale = g.get(0, 0) / index.len() as f64;
                    let mut gl = Matrix::zeros(lv.rows(), lv.cols());
                    for (k, &i) in index.iter().enumerate() {
                        let row = gl.row_mut(i);
                        for (o, &p) in row.iter_mut().zip(probs.row(k)) {
                            *o += scale * p;
                        }
                        row[labels[i]] -= scale;
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn check_spmm_shapes(adj: &Adjacency, mask: &Matrix, h: &Matrix) -> Result<()> {
    if mask.shape() != (adj.num_edges(), 1) {
        return Err(Error::ShapeMismatch {
            op: "spmm mask",
            lhs: mask.shape(),
            rhs: (adj.num_edges(), 1),
        });
    }
    if h.rows() != adj.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "spmm rhs",
            lhs: h.shape(),
            rhs: (adj.num_nodes(), h.cols()),
        });
    }
    Ok(())
}

pub(crate) fn inv_sqrt_degree(adj: &Adjacency, mask: &[f64]) -> Vec<f64> {
    (0..adj.num_nodes())
        .map(|i| {
            let d: f64 = 1.0 + adj.neighbors(i).iter().map(|&(_, e)| mask[e]).sum::<f64>();
            1.0 / d.sqrt()
        })
        .collect()
}

/// Sparse product with the masked (optionally normalized, self-looped)
/// adjacency. The operator is symmetric, so the same routine serves the
/// backward pass with respect to `h`.
fn spmm(adj: &Adjacency, mask: &[f64], h: &Matrix, norm: Option<&[f64]>) -> Matrix {
    let cols = h.cols();
    let mut out = Matrix::zeros(adj.num_nodes(), cols);
    for i in 0..adj.num_nodes() {
        let row = out.row_mut(i);
        if let Some(s) = norm {
            let w = s[i] * s[i];
            for (o, &x) in row.iter_mut().zip(h.row(i)) {
                *o += w * x;
            }
        }
        for &(j, e) in adj.neighbors(i) {
            let w = match norm {
                Some(s) => s[i] * mask[e] * s[j],
                None => mask[e],
            };
            if w == 0.0 {
                continue;
            }
            for (o, &x) in row.iter_mut().zip(h.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

pub(crate) fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let o = out.row_mut(r);
        let mut z = 0.0;
        for (x, &v) in o.iter_mut().zip(row) {
            *x = (v - max).exp();
            z += *x;
        }
        for x in o.iter_mut() {
            *x /= z;
        }
    }
    out
}
