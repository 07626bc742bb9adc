use std::f64::consts::TAU;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to probabilities inside binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    ScalarMul(f64),
    LeakyRelu(f64),
    Sigmoid,
    Exp,
    /// `sin(2πx)`
    Sin2Pi,
    /// `cos(2πx)`
    Cos2Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    /// Column minimum over the batch axis. Gradient-stopping.
    PerFeatureMin,
    /// Column maximum over the batch axis. Gradient-stopping.
    PerFeatureMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Bce,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    ScalarMul(f64),
    LeakyRelu(f64),
    Sigmoid,
    Exp,
    Sin2Pi,
    Cos2Pi,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Unary(Var, Unary),
    AddBias(Var, Var),
    Reduce(Var, ReduceOp, Option<usize>),
    /// `y[i][j] = (x[i][j] - shift[j]) * scale[j]`, shift and scale constant.
    ColumnAffine {
        x: Var,
        scale: Vec<f64>,
    },
    /// `x + c` with `c` a recorded constant.
    AddConst(Var),
    /// Columns `[a0, b0, a1, b1, ...]`.
    Interleave(Var, Var),
    Loss(Var, Var, LossKind),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations. Nodes are appended as ops run, so
/// every input precedes its consumers and backward is a reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Var>,
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

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        let var = Var(self.nodes.len());
        value.requires_grad = requires_grad;
        value.grad = None;
        value.node_id = Some(var);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        var
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf holding a copy of `t`; differentiable iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let rg = t.requires_grad;
        self.push(t.clone(), Op::Leaf, rg)
    }

    /// Records a non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records a trainable parameter. Registration order is the order in
    /// which [`Tape::write_grads`] expects the parameters back.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let v = self.push(t.clone(), Op::Leaf, true);
        self.params.push(v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            (m, k, n),
            false,
            false,
            0.0,
        );
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    pub fn elementwise(&mut self, op: ElementwiseOp, inputs: &[Var]) -> Result<Var> {
        use ElementwiseOp as E;
        let arity = match op {
            E::Add | E::Sub | E::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{op:?} takes {arity} inputs, got {}",
                inputs.len()
            )));
        }
        match op {
            E::Add => self.add(inputs[0], inputs[1]),
            E::Sub => self.sub(inputs[0], inputs[1]),
            E::Mul => self.mul(inputs[0], inputs[1]),
            E::ScalarMul(c) => Ok(self.unary(inputs[0], Unary::ScalarMul(c))),
            E::LeakyRelu(s) => Ok(self.unary(inputs[0], Unary::LeakyRelu(s))),
            E::Sigmoid => Ok(self.unary(inputs[0], Unary::Sigmoid)),
            E::Exp => Ok(self.unary(inputs[0], Unary::Exp)),
            E::Sin2Pi => Ok(self.unary(inputs[0], Unary::Sin2Pi)),
            E::Cos2Pi => Ok(self.unary(inputs[0], Unary::Cos2Pi)),
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, u: Unary) -> Var {
        let f: fn(f64, Unary) -> f64 = |v, u| match u {
            Unary::ScalarMul(c) => c * v,
            Unary::LeakyRelu(s) => {
                if v > 0.0 {
                    v
                } else {
                    s * v
                }
            }
            Unary::Sigmoid => sigmoid(v),
            Unary::Exp => v.exp(),
            Unary::Sin2Pi => (TAU * v).sin(),
            Unary::Cos2Pi => (TAU * v).cos(),
        };
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v, u)).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(x);
        self.push(t, Op::Unary(x, u), rg)
    }

    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Unary::ScalarMul(c))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn sin2pi(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sin2Pi)
    }

    pub fn cos2pi(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Cos2Pi)
    }

    /// Adds a length-`n` bias row to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if self.value(bias).len() != n {
            return Err(Error::dim("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::AddBias(x, bias), rg))
    }

    /// Reduces a matrix. `axis = None` reduces everything to a scalar,
    /// `Some(0)` reduces over rows (the batch) and `Some(1)` over columns.
    /// The per-feature min/max variants always reduce over the batch axis.
    pub fn reduce(&mut self, op: ReduceOp, x: Var, axis: Option<usize>) -> Result<Var> {
        let src = self.value(x);
        if src.is_empty() {
            return Err(Error::EmptyInput("reduce"));
        }
        let (shape, data): (Vec<usize>, Vec<f64>) = match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                let mean = op == ReduceOp::Mean;
                match axis {
                    None => {
                        let s: f64 = src.data().iter().sum();
                        let v = if mean { s / src.len() as f64 } else { s };
                        (Vec::new(), vec![v])
                    }
                    Some(ax @ (0 | 1)) => {
                        let (m, n) = src.dims2()?;
                        let (outer, count) = if ax == 0 { (n, m) } else { (m, n) };
                        let mut out = vec![0.0; outer];
                        for i in 0..m {
                            for j in 0..n {
                                out[if ax == 0 { j } else { i }] += src.get(i, j);
                            }
                        }
                        if mean {
                            out.iter_mut().for_each(|v| *v /= count as f64);
                        }
                        (vec![outer], out)
                    }
                    Some(ax) => {
                        return Err(Error::Argument(format!("reduce axis {ax} out of range")))
                    }
                }
            }
            ReduceOp::PerFeatureMin | ReduceOp::PerFeatureMax => {
                if matches!(axis, Some(a) if a != 0) {
                    return Err(Error::Argument(
                        "per-feature min/max reduce over the batch axis only".into(),
                    ));
                }
                let (m, n) = src.dims2()?;
                let want_min = op == ReduceOp::PerFeatureMin;
                let mut out = src.row(0).to_vec();
                for i in 1..m {
                    for (o, &v) in out.iter_mut().zip(src.row(i)) {
                        if (want_min && v < *o) || (!want_min && v > *o) {
                            *o = v;
                        }
                    }
                }
                (vec![n], out)
            }
        };
        let rg = matches!(op, ReduceOp::Sum | ReduceOp::Mean) && self.needs(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Reduce(x, op, axis), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(ReduceOp::Sum, x, None)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(ReduceOp::Mean, x, None)
    }

    /// `y[i][j] = (x[i][j] - shift[j]) * scale[j]` with constant shift/scale.
    pub fn column_affine(&mut self, x: Var, shift: &[f64], scale: &[f64]) -> Result<Var> {
        let (m, n) = self.dims2(x)?;
        if shift.len() != n || scale.len() != n {
            return Err(Error::dim(
                "column_affine",
                self.shape(x),
                &[shift.len(), scale.len()],
            ));
        }
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for ((v, s), c) in row.iter_mut().zip(shift).zip(scale) {
                *v = (*v - s) * c;
            }
        }
        let rg = self.needs(x);
        let op = Op::ColumnAffine {
            x,
            scale: scale.to_vec(),
        };
        Ok(self.push(Tensor::matrix(m, n, data)?, op, rg))
    }

    /// Adds a constant tensor; the gradient passes straight through to `x`.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::dim("add_const", self.shape(x), c.shape()));
        }
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(c.data())
            .map(|(a, b)| a + b)
            .collect();
        let t = Tensor::new(c.shape().to_vec(), data)?;
        let rg = self.needs(x);
        Ok(self.push(t, Op::AddConst(x), rg))
    }

    /// Interleaves the columns of two `m×n` matrices into `m×2n`.
    pub fn interleave(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("interleave", a, b)?;
        let (m, n) = self.dims2(a)?;
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(2 * m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(va[i * n + j]);
                data.push(vb[i * n + j]);
            }
        }
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, 2 * n, data)?, Op::Interleave(a, b), rg))
    }

    /// Mean squared error or mean binary cross-entropy as a scalar node.
    pub fn loss(&mut self, kind: LossKind, prediction: Var, target: Var) -> Result<Var> {
        self.same_shape("loss", prediction, target)?;
        let (p, t) = (self.value(prediction).data(), self.value(target).data());
        if p.is_empty() {
            return Err(Error::EmptyInput("loss"));
        }
        let n = p.len() as f64;
        let total: f64 = match kind {
            LossKind::Mse => p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum(),
            LossKind::Bce => p
                .iter()
                .zip(t)
                .map(|(&a, &y)| {
                    let a = a.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    -(y * a.ln() + (1.0 - y) * (1.0 - a).ln())
                })
                .sum(),
        };
        let rg = self.needs(prediction) || self.needs(target);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Loss(prediction, target, kind),
            rg,
        ))
    }

    /// Back-propagates from a scalar node, replacing any previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let len = self.value(v).len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        contribution(slot);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) -> Result<()> {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims2(a)?;
                let n = self.dims2(b)?.1;
                if self.needs(a) {
                    let bv = self.value(b).data().to_vec();
                    self.accumulate(a, |da| gemm(g, &bv, da, (m, n, k), false, true, 1.0));
                }
                if self.needs(b) {
                    let av = self.value(a).data().to_vec();
                    self.accumulate(b, |db| gemm(&av, g, db, (k, m, n), true, false, 1.0));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, |d| add_into(d, g));
                self.accumulate(b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |d| add_into(d, g));
                self.accumulate(b, |d| d.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let av = self.value(a).data().to_vec();
                let bv = self.value(b).data().to_vec();
                self.accumulate(a, |d| {
                    for ((x, gy), bb) in d.iter_mut().zip(g).zip(&bv) {
                        *x += gy * bb;
                    }
                });
                self.accumulate(b, |d| {
                    for ((x, gy), aa) in d.iter_mut().zip(g).zip(&av) {
                        *x += gy * aa;
                    }
                });
            }
            Op::Unary(x, u) => {
                let input = self.value(x).data().to_vec();
                let output = self.nodes[i].value.data().to_vec();
                self.accumulate(x, |d| {
                    for (j, dx) in d.iter_mut().enumerate() {
                        let (xv, yv) = (input[j], output[j]);
                        let local = match u {
                            Unary::ScalarMul(c) => c,
                            Unary::LeakyRelu(s) => {
                                if xv > 0.0 {
                                    1.0
                                } else {
                                    s
                                }
                            }
                            Unary::Sigmoid => yv * (1.0 - yv),
                            Unary::Exp => yv,
                            Unary::Sin2Pi => TAU * (TAU * xv).cos(),
                            Unary::Cos2Pi => -TAU * (TAU * xv).sin(),
                        };
                        *dx += g[j] * local;
                    }
                });
            }
            Op::AddBias(x, bias) => {
                let n = self.dims2(x)?.1;
                self.accumulate(x, |d| add_into(d, g));
                self.accumulate(bias, |d| {
                    for row in g.chunks_exact(n) {
                        add_into(d, row);
                    }
                });
            }
            Op::Reduce(x, op, axis) => {
                // Min/max nodes never require grad, so only sum/mean land here.
                let len = self.value(x).len();
                let scale = |count: usize| {
                    if op == ReduceOp::Mean {
                        1.0 / count as f64
                    } else {
                        1.0
                    }
                };
                match axis {
                    None => {
                        let s = g[0] * scale(len);
                        self.accumulate(x, |d| d.iter_mut().for_each(|v| *v += s));
                    }
                    Some(ax) => {
                        let (m, n) = self.dims2(x)?;
                        let c = scale(if ax == 0 { m } else { n });
                        self.accumulate(x, |d| {
                            for r in 0..m {
                                for col in 0..n {
                                    let gi = if ax == 0 { g[col] } else { g[r] };
                                    d[r * n + col] += gi * c;
                                }
                            }
                        });
                    }
                }
            }
            Op::ColumnAffine { x, scale } => {
                let n = scale.len();
                self.accumulate(x, |d| {
                    for (drow, grow) in d.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
                        for ((dv, gv), s) in drow.iter_mut().zip(grow).zip(&scale) {
                            *dv += gv * s;
                        }
                    }
                });
            }
            Op::AddConst(x) => self.accumulate(x, |d| add_into(d, g)),
            Op::Interleave(a, b) => {
                self.accumulate(a, |d| {
                    d.iter_mut().zip(g.iter().step_by(2)).for_each(|(x, y)| *x += y)
                });
                self.accumulate(b, |d| {
                    d.iter_mut()
                        .zip(g.iter().skip(1).step_by(2))
                        .for_each(|(x, y)| *x += y)
                });
            }
            Op::Loss(p, t, kind) => {
                let pv = self.value(p).data().to_vec();
                let tv = self.value(t).data().to_vec();
                let c = g[0] / pv.len() as f64;
                let (dp, dt): (Vec<f64>, Vec<f64>) = match kind {
                    LossKind::Mse => pv
                        .iter()
                        .zip(&tv)
                        .map(|(a, b)| {
                            let d = 2.0 * (a - b) * c;
                            (d, -d)
                        })
                        .unzip(),
                    LossKind::Bce => pv
                        .iter()
                        .zip(&tv)
                        .map(|(&a, &y)| {
                            let ac = a.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                            let dp = if ac == a {
                                c * (ac - y) / (ac * (1.0 - ac))
                            } else {
                                0.0
                            };
                            (dp, c * ((1.0 - ac).ln() - ac.ln()))
                        })
                        .unzip(),
                };
                self.accumulate(p, |d| add_into(d, &dp));
                self.accumulate(t, |d| add_into(d, &dt));
            }
        }
        Ok(())
    }

    /// Adds each registered parameter's gradient into the matching tensor,
    /// allocating the buffer when absent. `params` must follow registration
    /// order.
    pub fn write_grads<'a>(
        &self,
        params: impl IntoIterator<Item = &'a mut Tensor>,
    ) -> Result<()> {
        let mut count = 0;
        for (p, &var) in params.into_iter().zip(&self.params) {
            count += 1;
            if p.shape() != self.shape(var) {
                return Err(Error::dim("write_grads", p.shape(), self.shape(var)));
            }
            let len = p.len();
            let buf = p.grad.get_or_insert_with(|| vec![0.0; len]);
            if let Some(g) = self.grad(var) {
                add_into(buf, g);
            }
            p.node_id = Some(var);
        }
        if count != self.params.len() {
            return Err(Error::Contract(format!(
                "tape registered {} parameters, got {count}",
                self.params.len()
            )));
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
