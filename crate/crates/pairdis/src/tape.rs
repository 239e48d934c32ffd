//! Reverse-mode differentiation over a per-minibatch operation tape.
//!
//! Every forward primitive appends one node; `backward` replays the tape
//! in reverse order (append order is already topological) and accumulates
//! gradients into per-node buffers. A tape is built for one objective
//! evaluation and discarded; there is no graph reuse.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, softplus, Tensor};

/// Handle to a node on a tape. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Tanh(usize),
    Softplus(usize),
    Relu(usize),
    Neg(usize),
    Square(usize),
    Affine(usize, f64),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
    SqDistRows(usize, usize),
    LogNormC(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward pass: per-node cotangents.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `v`; zero tensor if `v` is off-path.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        value.assert_finite("tape op output")?;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Leaf holding data that gradients are not requested for.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that participates in differentiation.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::MatMul(a.0, b.0), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x + y)?;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::Add(a.0, b.0), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x - y)?;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::Sub(a.0, b.0), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip(self.value(b), |x, y| x * y)?;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(v, Op::Mul(a.0, b.0), ng)
    }

    /// x [m, n] + bias [n], broadcast over the batch (row) axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (m, n) = (xv.rows(), xv.cols());
        if bv.shape() != [n] {
            return Err(Error::Shape(format!(
                "bias {:?} for input {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for r in 0..m {
            for c in 0..n {
                out.data_mut()[r * n + c] += bv.data()[c];
            }
        }
        let ng = self.needs(x.0) || self.needs(bias.0);
        self.push(out, Op::AddBias(x.0, bias.0), ng)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::exp);
        let ng = self.needs(x.0);
        self.push(v, Op::Exp(x.0), ng)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("log of non-positive value".into()));
        }
        let v = self.value(x).map(f64::ln);
        let ng = self.needs(x.0);
        self.push(v, Op::Log(x.0), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(sigmoid);
        let ng = self.needs(x.0);
        self.push(v, Op::Sigmoid(x.0), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::tanh);
        let ng = self.needs(x.0);
        self.push(v, Op::Tanh(x.0), ng)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(softplus);
        let ng = self.needs(x.0);
        self.push(v, Op::Softplus(x.0), ng)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|t| t.max(0.0));
        let ng = self.needs(x.0);
        self.push(v, Op::Relu(x.0), ng)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).scale(-1.0);
        let ng = self.needs(x.0);
        self.push(v, Op::Neg(x.0), ng)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|t| t * t);
        let ng = self.needs(x.0);
        self.push(v, Op::Square(x.0), ng)
    }

    /// k*x + c elementwise, constants not differentiated.
    pub fn affine(&mut self, x: Var, k: f64, c: f64) -> Result<Var> {
        let v = self.value(x).map(|t| k * t + c);
        let ng = self.needs(x.0);
        self.push(v, Op::Affine(x.0, k), ng)
    }

    /// Clamp to [lo, hi]; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.value(x).map(|t| t.clamp(lo, hi));
        let ng = self.needs(x.0);
        self.push(v, Op::Clamp(x.0, lo, hi), ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        let ng = self.needs(x.0);
        self.push(v, Op::Sum(x.0), ng)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::Domain("mean of empty tensor".into()));
        }
        let v = Tensor::scalar(xv.data().iter().sum::<f64>() / xv.len() as f64);
        let ng = self.needs(x.0);
        self.push(v, Op::Mean(x.0), ng)
    }

    /// [m, n] -> [m], summing over the last axis.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = xv.as_2d();
        let mut out = vec![0.0; m];
        for r in 0..m {
            out[r] = xv.data()[r * n..(r + 1) * n].iter().sum();
        }
        let ng = self.needs(x.0);
        self.push(Tensor::new(vec![m], out)?, Op::RowSum(x.0), ng)
    }

    /// Concatenate along the last axis: [m, na] ++ [m, nb] -> [m, na+nb].
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        let (ma, na) = (av.rows(), av.cols());
        let (mb, nb) = (bv.rows(), bv.cols());
        if ma != mb {
            return Err(Error::Shape(format!(
                "concat_cols row mismatch {} vs {}",
                ma, mb
            )));
        }
        let mut out = Vec::with_capacity(ma * (na + nb));
        for r in 0..ma {
            out.extend_from_slice(&av.data()[r * na..(r + 1) * na]);
            out.extend_from_slice(&bv.data()[r * nb..(r + 1) * nb]);
        }
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(Tensor::new(vec![ma, na + nb], out)?, Op::ConcatCols(a.0, b.0), ng)
    }

    /// Columns [start, start+len) of a [m, n] tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice [{}, {}) of {} columns",
                start,
                start + len,
                n
            )));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&xv.data()[r * n + start..r * n + start + len]);
        }
        let ng = self.needs(x.0);
        self.push(Tensor::new(vec![m, len], out)?, Op::SliceCols(x.0, start, len), ng)
    }

    /// Select rows by index (duplicates allowed); gradient scatter-adds.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::Shape(format!("row index {} out of {}", bad, m)));
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(&xv.data()[i * n..(i + 1) * n]);
        }
        let ng = self.needs(x.0);
        self.push(
            Tensor::new(vec![idx.len(), n], out)?,
            Op::GatherRows(x.0, idx.to_vec()),
            ng,
        )
    }

    /// Squared euclidean distance between matching rows: [m, n] x [m, n] -> [m].
    pub fn sq_dist_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "sq_dist_rows {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; m];
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..n {
                let d = av.data()[r * n + c] - bv.data()[r * n + c];
                acc += d * d;
            }
            out[r] = acc;
        }
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(Tensor::new(vec![m], out)?, Op::SqDistRows(a.0, b.0), ng)
    }

    /// log C(u) where C(u) = tanh(u/2)/u is the normalizer of the
    /// real-valued similarity density, elementwise. Even in u; stable from
    /// u = 0 (series branch) through |u| in the thousands.
    pub fn log_norm_c(&mut self, u: Var) -> Result<Var> {
        let v = self.value(u).map(log_norm_c_scalar);
        let ng = self.needs(u.0);
        self.push(v, Op::LogNormC(u.0), ng)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(
            self.value(root).shape().to_vec(),
            vec![1.0],
        )?);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let d = match grads[i].take() {
                Some(d) => d,
                None => continue,
            };
            self.propagate(i, &d, &mut grads);
            grads[i] = Some(d);
        }

        let shapes = self.nodes.iter().map(|nd| nd.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, i: usize, d: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], j: usize, g: Tensor| {
            if !self.nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if self.nodes[*a].needs_grad {
                    acc(grads, *a, d.matmul_nt(bv).expect("matmul grad"));
                }
                if self.nodes[*b].needs_grad {
                    acc(grads, *b, av.matmul_tn(d).expect("matmul grad"));
                }
            }
            Op::Add(a, b) => {
                acc(grads, *a, d.clone());
                acc(grads, *b, d.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, d.clone());
                acc(grads, *b, d.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                if self.nodes[*a].needs_grad {
                    acc(grads, *a, d.zip(bv, |x, y| x * y).expect("mul grad"));
                }
                if self.nodes[*b].needs_grad {
                    acc(grads, *b, d.zip(av, |x, y| x * y).expect("mul grad"));
                }
            }
            Op::AddBias(x, bias) => {
                acc(grads, *x, d.clone());
                if self.nodes[*bias].needs_grad {
                    let (m, n) = d.as_2d();
                    let mut g = vec![0.0; n];
                    for r in 0..m {
                        for c in 0..n {
                            g[c] += d.data()[r * n + c];
                        }
                    }
                    acc(grads, *bias, Tensor::from_vec(g));
                }
            }
            Op::Exp(x) => {
                let v = &self.nodes[i].value;
                acc(grads, *x, d.zip(v, |g, e| g * e).expect("exp grad"));
            }
            Op::Log(x) => {
                let xv = &self.nodes[*x].value;
                acc(grads, *x, d.zip(xv, |g, t| g / t).expect("log grad"));
            }
            Op::Sigmoid(x) => {
                let v = &self.nodes[i].value;
                acc(grads, *x, d.zip(v, |g, s| g * s * (1.0 - s)).expect("sigmoid grad"));
            }
            Op::Tanh(x) => {
                let v = &self.nodes[i].value;
                acc(grads, *x, d.zip(v, |g, t| g * (1.0 - t * t)).expect("tanh grad"));
            }
            Op::Softplus(x) => {
                let xv = &self.nodes[*x].value;
                acc(grads, *x, d.zip(xv, |g, t| g * sigmoid(t)).expect("softplus grad"));
            }
            Op::Relu(x) => {
                let xv = &self.nodes[*x].value;
                acc(
                    grads,
                    *x,
                    d.zip(xv, |g, t| if t > 0.0 { g } else { 0.0 }).expect("relu grad"),
                );
            }
            Op::Neg(x) => acc(grads, *x, d.scale(-1.0)),
            Op::Square(x) => {
                let xv = &self.nodes[*x].value;
                acc(grads, *x, d.zip(xv, |g, t| g * 2.0 * t).expect("square grad"));
            }
            Op::Affine(x, k) => acc(grads, *x, d.scale(*k)),
            Op::Clamp(x, lo, hi) => {
                let xv = &self.nodes[*x].value;
                acc(
                    grads,
                    *x,
                    d.zip(xv, |g, t| if t > *lo && t < *hi { g } else { 0.0 })
                        .expect("clamp grad"),
                );
            }
            Op::Sum(x) => {
                let s = d.item();
                acc(grads, *x, Tensor::full(self.nodes[*x].value.shape(), s));
            }
            Op::Mean(x) => {
                let n = self.nodes[*x].value.len() as f64;
                acc(grads, *x, Tensor::full(self.nodes[*x].value.shape(), d.item() / n));
            }
            Op::RowSum(x) => {
                let xv = &self.nodes[*x].value;
                let (m, n) = xv.as_2d();
                let mut g = Tensor::zeros(xv.shape());
                for r in 0..m {
                    for c in 0..n {
                        g.data_mut()[r * n + c] = d.data()[r];
                    }
                }
                acc(grads, *x, g);
            }
            Op::ConcatCols(a, b) => {
                let na = self.nodes[*a].value.cols();
                let nb = self.nodes[*b].value.cols();
                let m = self.nodes[*a].value.rows();
                let mut ga = Tensor::zeros(self.nodes[*a].value.shape());
                let mut gb = Tensor::zeros(self.nodes[*b].value.shape());
                for r in 0..m {
                    let row = &d.data()[r * (na + nb)..(r + 1) * (na + nb)];
                    ga.data_mut()[r * na..(r + 1) * na].copy_from_slice(&row[..na]);
                    gb.data_mut()[r * nb..(r + 1) * nb].copy_from_slice(&row[na..]);
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::SliceCols(x, start, len) => {
                let xv = &self.nodes[*x].value;
                let (m, n) = (xv.rows(), xv.cols());
                let mut g = Tensor::zeros(xv.shape());
                for r in 0..m {
                    g.data_mut()[r * n + start..r * n + start + len]
                        .copy_from_slice(&d.data()[r * len..(r + 1) * len]);
                }
                acc(grads, *x, g);
            }
            Op::GatherRows(x, idx) => {
                let xv = &self.nodes[*x].value;
                let n = xv.cols();
                let mut g = Tensor::zeros(xv.shape());
                for (r, &src) in idx.iter().enumerate() {
                    for c in 0..n {
                        g.data_mut()[src * n + c] += d.data()[r * n + c];
                    }
                }
                acc(grads, *x, g);
            }
            Op::SqDistRows(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let (m, n) = (av.rows(), av.cols());
                let mut ga = Tensor::zeros(av.shape());
                let mut gb = Tensor::zeros(bv.shape());
                for r in 0..m {
                    let dr = d.data()[r];
                    for c in 0..n {
                        let diff = av.data()[r * n + c] - bv.data()[r * n + c];
                        ga.data_mut()[r * n + c] = 2.0 * dr * diff;
                        gb.data_mut()[r * n + c] = -2.0 * dr * diff;
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::LogNormC(u) => {
                let uv = &self.nodes[*u].value;
                acc(
                    grads,
                    *u,
                    d.zip(uv, |g, t| g * dlog_norm_c_scalar(t)).expect("log_norm_c grad"),
                );
            }
        }
    }
}

/// log C(u) with C(u) = tanh(u/2)/u, even in u.
///
/// For |u| >= 1e-4: log tanh(|u|/2) = log1p(-2/(e^{|u|}+1)), minus log|u|.
/// Below that the 0/0 form is replaced by the series
/// C(u) = 1/2 - u^2/24 + O(u^4), so C(0) = 1/2 exactly.
pub fn log_norm_c_scalar(u: f64) -> f64 {
    let a = u.abs();
    if a < 1e-4 {
        norm_c_scalar(u).ln()
    } else {
        (-2.0 / (a.exp() + 1.0)).ln_1p() - a.ln()
    }
}

/// C(u) itself; series branch near zero returns exactly 0.5 at u = 0.
pub fn norm_c_scalar(u: f64) -> f64 {
    let a = u.abs();
    if a < 1e-4 {
        0.5 - u * u / 24.0
    } else {
        (1.0 - 2.0 / (a.exp() + 1.0)) / a
    }
}

/// d/du log C(u) = 1/sinh(u) - 1/u, odd in u; series -u/6 near zero.
pub fn dlog_norm_c_scalar(u: f64) -> f64 {
    let a = u.abs();
    if a < 1e-4 {
        -u / 6.0
    } else if a > 700.0 {
        // sinh overflows; its reciprocal is zero to machine precision
        -1.0 / u
    } else {
        1.0 / u.sinh() - 1.0 / u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients() {
        // root = sum(w .* w), w = [1,2,3] -> grad [2,4,6]
        let mut t = Tape::new();
        let w = t.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let sq = t.square(w).unwrap();
        let root = t.sum(sq).unwrap();
        let g = t.backward(root).unwrap();
        assert_eq!(g.get(w).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let mut t = Tape::new();
        let w = t.param(Tensor::from_vec(vec![0.0]));
        let s = t.sigmoid(w).unwrap();
        let root = t.sum(s).unwrap();
        let g = t.backward(root).unwrap();
        assert!((g.get(w).data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let w = t.param(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(t.backward(w).is_err());
    }

    #[test]
    fn off_path_param_gets_zero() {
        let mut t = Tape::new();
        let w = t.param(Tensor::from_vec(vec![1.0]));
        let unused = t.param(Tensor::from_vec(vec![5.0, 6.0]));
        let root = t.sum(w).unwrap();
        let g = t.backward(root).unwrap();
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_is_linear() {
        // grad of (a*f + b*g) == a*grad f + b*grad g
        let w0 = Tensor::from_vec(vec![0.3, -1.2, 2.5]);
        let grad_of = |a: f64, b: f64| -> Vec<f64> {
            let mut t = Tape::new();
            let w = t.param(w0.clone());
            let f = {
                let sq = t.square(w).unwrap();
                t.sum(sq).unwrap()
            };
            let g = {
                let s = t.sigmoid(w).unwrap();
                t.sum(s).unwrap()
            };
            let fa = t.affine(f, a, 0.0).unwrap();
            let gb = t.affine(g, b, 0.0).unwrap();
            let root = t.add(fa, gb).unwrap();
            t.backward(root).unwrap().get(w).data().to_vec()
        };
        let gf = grad_of(1.0, 0.0);
        let gg = grad_of(0.0, 1.0);
        let gboth = grad_of(2.0, -3.0);
        for k in 0..3 {
            let lin = 2.0 * gf[k] - 3.0 * gg[k];
            assert!((gboth[k] - lin).abs() <= 1e-12 * lin.abs().max(1.0));
        }
    }

    #[test]
    fn gather_rows_accumulates_duplicates() {
        let mut t = Tape::new();
        let x = t.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = t.gather_rows(x, &[0, 0, 1]).unwrap();
        let root = t.sum(g).unwrap();
        let grad = t.backward(root).unwrap().get(x);
        assert_eq!(grad.data(), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn log_norm_c_branches() {
        assert_eq!(norm_c_scalar(0.0), 0.5);
        // continuity across the series boundary
        let lo = log_norm_c_scalar(0.99e-4);
        let hi = log_norm_c_scalar(1.01e-4);
        assert!((lo - hi).abs() < 1e-10);
        // evenness
        for &u in &[0.3, 2.0, 55.0, 2000.0] {
            assert!((log_norm_c_scalar(u) - log_norm_c_scalar(-u)).abs() < 1e-12);
        }
        // known value: C(2) = tanh(1)/2
        let c2 = (2.0f64 / 2.0).tanh() / 2.0;
        assert!((log_norm_c_scalar(2.0) - c2.ln()).abs() < 1e-12);
        // saturation: C(2000) ~ 1/2000
        assert!((log_norm_c_scalar(2000.0) + 2000.0f64.ln()).abs() < 1e-9);
    }
}
