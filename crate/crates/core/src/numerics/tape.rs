//! Operation tape for reverse-mode differentiation.
//!
//! Forward ops evaluate eagerly and append one node per operation, so the
//! tape is topologically ordered by construction. [`Tape::backward`] walks
//! the node list once in reverse, which makes gradients deterministic:
//! identical inputs yield bit-identical gradients.
//!
//! Supported primitive kinds: matmul, add, sub, elementwise mul/div, concat
//! (rows or last axis), slice (last axis), reshape, tanh, sigmoid, relu,
//! exp, log, softmax (last axis), clamp, affine-by-constant, sum and mean.
//! Binary ops broadcast a `[1,n]` row or `[m,1]` column right-hand side
//! against an `[m,n]` left-hand side; nothing wider is needed here.

use std::cell::RefCell;
use std::rc::Rc;

use super::tensor::matmul_values;
use super::{NumericsError, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs is a `[1,n]` row repeated over rows of lhs.
    RowRhs,
    /// rhs is a `[m,1]` column repeated over columns of lhs.
    ColRhs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Log,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Bin {
        kind: BinKind,
        a: usize,
        b: usize,
        bc: Broadcast,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    Unary {
        kind: UnaryKind,
        x: usize,
    },
    Softmax {
        x: usize,
    },
    ClampMin {
        x: usize,
        lo: f64,
    },
    ClampMax {
        x: usize,
        hi: f64,
    },
    /// `scale * x + shift` with constant coefficients; only the scale
    /// matters to the backward pass.
    Affine {
        x: usize,
        scale: f64,
    },
    ConcatCols {
        xs: Vec<usize>,
    },
    ConcatRows {
        xs: Vec<usize>,
    },
    SliceCols {
        x: usize,
        offset: usize,
        len: usize,
    },
    Reshape {
        x: usize,
    },
    Sum {
        x: usize,
    },
    Mean {
        x: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// Records forward operations for a single differentiable computation.
///
/// Cloning a `Tape` clones the handle, not the recording; a training step
/// builds one tape, runs [`Tape::backward`] once and drops it.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.clone(),
            id,
        }
    }

    /// Gradient-tracked input (a parameter or any tensor whose gradient is
    /// wanted).
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Input excluded from gradient tracking (data, masks, frozen weights).
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    fn same_tape(&self, v: &Var) -> Result<()> {
        if Rc::ptr_eq(&self.inner, &v.tape.inner) {
            Ok(())
        } else {
            Err(NumericsError::TapeMismatch)
        }
    }

    fn record(&self, op: Op, value: Tensor, inputs_need_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        Ok(self.push(value, op, inputs_need_grad))
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.inner.borrow().nodes[id].value.clone()
    }

    fn needs_grad(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].needs_grad
    }

    /// Concatenates along the last axis; all inputs must have equal rows.
    pub fn concat_cols(&self, xs: &[&Var]) -> Result<Var> {
        self.concat(xs, false)
    }

    /// Stacks along the first axis; all inputs must have equal cols.
    pub fn concat_rows(&self, xs: &[&Var]) -> Result<Var> {
        self.concat(xs, true)
    }

    fn concat(&self, xs: &[&Var], rows: bool) -> Result<Var> {
        if xs.is_empty() {
            return Err(NumericsError::Usage("concat of zero tensors".into()));
        }
        for x in xs {
            self.same_tape(x)?;
        }
        let vals: Vec<Tensor> = xs.iter().map(|x| self.value_of(x.id)).collect();
        let needs = xs.iter().any(|x| self.needs_grad(x.id));
        let ids: Vec<usize> = xs.iter().map(|x| x.id).collect();
        if rows {
            let cols = vals[0].cols();
            if vals.iter().any(|v| v.cols() != cols) {
                return Err(NumericsError::Dimension {
                    op: "concat_rows",
                    detail: "column counts differ".into(),
                });
            }
            let total_rows: usize = vals.iter().map(|v| v.rows()).sum();
            let mut out = Vec::with_capacity(total_rows * cols);
            for v in &vals {
                out.extend_from_slice(v.values());
            }
            let value = Tensor::new(vec![total_rows, cols], out)?;
            self.record(Op::ConcatRows { xs: ids }, value, needs, "concat_rows")
        } else {
            let rows_n = vals[0].rows();
            if vals.iter().any(|v| v.rows() != rows_n) {
                return Err(NumericsError::Dimension {
                    op: "concat_cols",
                    detail: "row counts differ".into(),
                });
            }
            let total_cols: usize = vals.iter().map(|v| v.cols()).sum();
            let mut out = vec![0.0; rows_n * total_cols];
            let mut base = 0;
            for v in &vals {
                let c = v.cols();
                for r in 0..rows_n {
                    out[r * total_cols + base..r * total_cols + base + c]
                        .copy_from_slice(&v.values()[r * c..(r + 1) * c]);
                }
                base += c;
            }
            let value = Tensor::new(vec![rows_n, total_cols], out)?;
            self.record(Op::ConcatCols { xs: ids }, value, needs, "concat_cols")
        }
    }

    /// Reverse pass from a scalar loss. Returns one gradient per tracked
    /// leaf; leaves unreachable from the loss read back as zeros.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        self.same_tape(loss)?;
        let inner = self.inner.borrow();
        let nodes = &inner.nodes;
        if nodes[loss.id].value.numel() != 1 {
            return Err(NumericsError::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Input) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            backprop_node(nodes, id, &g, &mut grads);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Per-leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` never
    /// influenced the loss.
    pub fn get(&self, v: &Var) -> Tensor {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.id]),
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], delta: &Tensor) {
    match slot {
        Some(t) => t.add_assign(delta),
        None => {
            let mut t = Tensor::zeros(shape);
            t.add_assign(delta);
            *slot = Some(t);
        }
    }
}

/// Reduces a full-shape gradient onto a broadcast rhs operand.
fn reduce_for_broadcast(g: &Tensor, bc: Broadcast, rhs_shape: &[usize]) -> Tensor {
    match bc {
        Broadcast::Same => g.clone(),
        Broadcast::RowRhs => {
            let (m, n) = (g.rows(), g.cols());
            let mut out = Tensor::zeros(rhs_shape);
            for i in 0..m {
                for j in 0..n {
                    out.values_mut()[j] += g.values()[i * n + j];
                }
            }
            out
        }
        Broadcast::ColRhs => {
            let (m, n) = (g.rows(), g.cols());
            let mut out = Tensor::zeros(rhs_shape);
            for i in 0..m {
                for j in 0..n {
                    out.values_mut()[i] += g.values()[i * n + j];
                }
            }
            out
        }
    }
}

/// Value of the rhs element aligned with flat index `idx` of the lhs view.
fn rhs_at(b: &Tensor, bc: Broadcast, idx: usize, cols: usize) -> f64 {
    match bc {
        Broadcast::Same => b.values()[idx],
        Broadcast::RowRhs => b.values()[idx % cols],
        Broadcast::ColRhs => b.values()[idx / cols],
    }
}

fn backprop_node(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let shape_of = |i: usize| nodes[i].value.shape().to_vec();
    let needs = |i: usize| nodes[i].needs_grad;
    match &nodes[id].op {
        Op::Input => {}
        Op::Bin { kind, a, b, bc } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let cols = av.cols();
            match kind {
                BinKind::Add | BinKind::Sub => {
                    if needs(*a) {
                        accumulate(&mut grads[*a], &shape_of(*a), g);
                    }
                    if needs(*b) {
                        let mut gb = reduce_for_broadcast(g, *bc, bv.shape());
                        if matches!(kind, BinKind::Sub) {
                            for v in gb.values_mut() {
                                *v = -*v;
                            }
                        }
                        accumulate(&mut grads[*b], &shape_of(*b), &gb);
                    }
                }
                BinKind::Mul => {
                    if needs(*a) {
                        let mut ga = g.clone();
                        for (i, v) in ga.values_mut().iter_mut().enumerate() {
                            *v *= rhs_at(bv, *bc, i, cols);
                        }
                        accumulate(&mut grads[*a], &shape_of(*a), &ga);
                    }
                    if needs(*b) {
                        let mut full = g.clone();
                        for (i, v) in full.values_mut().iter_mut().enumerate() {
                            *v *= av.values()[i];
                        }
                        let gb = reduce_for_broadcast(&full, *bc, bv.shape());
                        accumulate(&mut grads[*b], &shape_of(*b), &gb);
                    }
                }
                BinKind::Div => {
                    if needs(*a) {
                        let mut ga = g.clone();
                        for (i, v) in ga.values_mut().iter_mut().enumerate() {
                            *v /= rhs_at(bv, *bc, i, cols);
                        }
                        accumulate(&mut grads[*a], &shape_of(*a), &ga);
                    }
                    if needs(*b) {
                        let mut full = g.clone();
                        for (i, v) in full.values_mut().iter_mut().enumerate() {
                            let bi = rhs_at(bv, *bc, i, cols);
                            *v *= -av.values()[i] / (bi * bi);
                        }
                        let gb = reduce_for_broadcast(&full, *bc, bv.shape());
                        accumulate(&mut grads[*b], &shape_of(*b), &gb);
                    }
                }
            }
        }
        Op::MatMul { a, b } => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            if needs(*a) {
                let mut da = matmul_values(g, &bv.transposed()).expect("matmul backward");
                da = Tensor::new(shape_of(*a), da.values().to_vec()).expect("matmul grad shape");
                accumulate(&mut grads[*a], &shape_of(*a), &da);
            }
            if needs(*b) {
                let mut db = matmul_values(&av.transposed(), g).expect("matmul backward");
                db = Tensor::new(shape_of(*b), db.values().to_vec()).expect("matmul grad shape");
                accumulate(&mut grads[*b], &shape_of(*b), &db);
            }
        }
        Op::Unary { kind, x } => {
            if !needs(*x) {
                return;
            }
            let xv = &nodes[*x].value;
            let yv = &nodes[id].value;
            let mut gx = g.clone();
            match kind {
                UnaryKind::Tanh => {
                    for (i, v) in gx.values_mut().iter_mut().enumerate() {
                        let y = yv.values()[i];
                        *v *= 1.0 - y * y;
                    }
                }
                UnaryKind::Sigmoid => {
                    for (i, v) in gx.values_mut().iter_mut().enumerate() {
                        let y = yv.values()[i];
                        *v *= y * (1.0 - y);
                    }
                }
                UnaryKind::Relu => {
                    for (i, v) in gx.values_mut().iter_mut().enumerate() {
                        if xv.values()[i] <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                UnaryKind::Exp => {
                    for (i, v) in gx.values_mut().iter_mut().enumerate() {
                        *v *= yv.values()[i];
                    }
                }
                UnaryKind::Log => {
                    for (i, v) in gx.values_mut().iter_mut().enumerate() {
                        *v /= xv.values()[i];
                    }
                }
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::Softmax { x } => {
            if !needs(*x) {
                return;
            }
            let yv = &nodes[id].value;
            let (m, n) = (yv.rows(), yv.cols());
            let mut gx = Tensor::zeros(&shape_of(*x));
            for r in 0..m {
                let ys = &yv.values()[r * n..(r + 1) * n];
                let gs = &g.values()[r * n..(r + 1) * n];
                let dot: f64 = ys.iter().zip(gs).map(|(y, gg)| y * gg).sum();
                for j in 0..n {
                    gx.values_mut()[r * n + j] = ys[j] * (gs[j] - dot);
                }
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::ClampMin { x, lo } => {
            if !needs(*x) {
                return;
            }
            let xv = &nodes[*x].value;
            let mut gx = g.clone();
            for (i, v) in gx.values_mut().iter_mut().enumerate() {
                if xv.values()[i] < *lo {
                    *v = 0.0;
                }
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::ClampMax { x, hi } => {
            if !needs(*x) {
                return;
            }
            let xv = &nodes[*x].value;
            let mut gx = g.clone();
            for (i, v) in gx.values_mut().iter_mut().enumerate() {
                if xv.values()[i] > *hi {
                    *v = 0.0;
                }
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::Affine { x, scale } => {
            if !needs(*x) {
                return;
            }
            let mut gx = g.clone();
            for v in gx.values_mut() {
                *v *= scale;
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::ConcatCols { xs } => {
            let total_cols = nodes[id].value.cols();
            let rows = nodes[id].value.rows();
            let mut base = 0;
            for xid in xs {
                let c = nodes[*xid].value.cols();
                if needs(*xid) {
                    let mut gx = Tensor::zeros(&shape_of(*xid));
                    for r in 0..rows {
                        gx.values_mut()[r * c..(r + 1) * c].copy_from_slice(
                            &g.values()[r * total_cols + base..r * total_cols + base + c],
                        );
                    }
                    accumulate(&mut grads[*xid], &shape_of(*xid), &gx);
                }
                base += c;
            }
        }
        Op::ConcatRows { xs } => {
            let mut base = 0;
            for xid in xs {
                let len = nodes[*xid].value.numel();
                if needs(*xid) {
                    let gx = Tensor::new(shape_of(*xid), g.values()[base..base + len].to_vec())
                        .expect("concat_rows grad shape");
                    accumulate(&mut grads[*xid], &shape_of(*xid), &gx);
                }
                base += len;
            }
        }
        Op::SliceCols { x, offset, len } => {
            if !needs(*x) {
                return;
            }
            let xv = &nodes[*x].value;
            let (m, n) = (xv.rows(), xv.cols());
            let mut gx = Tensor::zeros(&shape_of(*x));
            for r in 0..m {
                gx.values_mut()[r * n + offset..r * n + offset + len]
                    .copy_from_slice(&g.values()[r * len..(r + 1) * len]);
            }
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::Reshape { x } => {
            if !needs(*x) {
                return;
            }
            let gx = Tensor::new(shape_of(*x), g.values().to_vec()).expect("reshape grad shape");
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::Sum { x } => {
            if !needs(*x) {
                return;
            }
            let gx = Tensor::full(&shape_of(*x), g.values()[0]);
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
        Op::Mean { x } => {
            if !needs(*x) {
                return;
            }
            let n = nodes[*x].value.numel() as f64;
            let gx = Tensor::full(&shape_of(*x), g.values()[0] / n);
            accumulate(&mut grads[*x], &shape_of(*x), &gx);
        }
    }
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    fn binary(&self, rhs: &Var, kind: BinKind, name: &'static str) -> Result<Var> {
        self.tape.same_tape(rhs)?;
        let a = self.value();
        let b = rhs.value();
        let bc = if a.shape() == b.shape() {
            Broadcast::Same
        } else if b.rows() == 1 && b.cols() == a.cols() {
            Broadcast::RowRhs
        } else if b.cols() == 1 && b.rows() == a.rows() {
            Broadcast::ColRhs
        } else {
            return Err(NumericsError::Dimension {
                op: name,
                detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
            });
        };
        let cols = a.cols();
        let mut out = a.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            let bi = rhs_at(&b, bc, i, cols);
            *v = match kind {
                BinKind::Add => *v + bi,
                BinKind::Sub => *v - bi,
                BinKind::Mul => *v * bi,
                BinKind::Div => *v / bi,
            };
        }
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(rhs.id);
        self.tape.record(
            Op::Bin {
                kind,
                a: self.id,
                b: rhs.id,
                bc,
            },
            out,
            needs,
            name,
        )
    }

    pub fn add(&self, rhs: &Var) -> Result<Var> {
        self.binary(rhs, BinKind::Add, "add")
    }

    pub fn sub(&self, rhs: &Var) -> Result<Var> {
        self.binary(rhs, BinKind::Sub, "sub")
    }

    pub fn mul(&self, rhs: &Var) -> Result<Var> {
        self.binary(rhs, BinKind::Mul, "mul")
    }

    pub fn div(&self, rhs: &Var) -> Result<Var> {
        self.binary(rhs, BinKind::Div, "div")
    }

    pub fn matmul(&self, rhs: &Var) -> Result<Var> {
        self.tape.same_tape(rhs)?;
        let out = matmul_values(&self.value(), &rhs.value())?;
        let needs = self.tape.needs_grad(self.id) || self.tape.needs_grad(rhs.id);
        self.tape.record(
            Op::MatMul {
                a: self.id,
                b: rhs.id,
            },
            out,
            needs,
            "matmul",
        )
    }

    fn unary(&self, kind: UnaryKind, name: &'static str) -> Result<Var> {
        let x = self.value();
        if matches!(kind, UnaryKind::Log) {
            if let Some(bad) = x.values().iter().find(|v| **v <= 0.0) {
                return Err(NumericsError::Domain {
                    op: "log",
                    detail: format!("log of non-positive value {}", bad),
                });
            }
        }
        let mut out = x;
        for v in out.values_mut() {
            *v = match kind {
                UnaryKind::Tanh => v.tanh(),
                UnaryKind::Sigmoid => 1.0 / (1.0 + (-*v).exp()),
                UnaryKind::Relu => v.max(0.0),
                UnaryKind::Exp => v.exp(),
                UnaryKind::Log => v.ln(),
            };
        }
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::Unary { kind, x: self.id }, out, needs, name)
    }

    pub fn tanh(&self) -> Result<Var> {
        self.unary(UnaryKind::Tanh, "tanh")
    }

    pub fn sigmoid(&self) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, "sigmoid")
    }

    pub fn relu(&self) -> Result<Var> {
        self.unary(UnaryKind::Relu, "relu")
    }

    pub fn exp(&self) -> Result<Var> {
        self.unary(UnaryKind::Exp, "exp")
    }

    pub fn log(&self) -> Result<Var> {
        self.unary(UnaryKind::Log, "log")
    }

    /// Row-wise softmax over the last axis, computed with a max shift.
    pub fn softmax(&self) -> Result<Var> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        if n == 0 {
            return Err(NumericsError::Dimension {
                op: "softmax",
                detail: "empty last axis".into(),
            });
        }
        let mut out = x.clone();
        for r in 0..m {
            let row = &mut out.values_mut()[r * n..(r + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::Softmax { x: self.id }, out, needs, "softmax")
    }

    pub fn clamp_min(&self, lo: f64) -> Result<Var> {
        let mut out = self.value();
        for v in out.values_mut() {
            *v = v.max(lo);
        }
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::ClampMin { x: self.id, lo }, out, needs, "clamp_min")
    }

    pub fn clamp_max(&self, hi: f64) -> Result<Var> {
        let mut out = self.value();
        for v in out.values_mut() {
            *v = v.min(hi);
        }
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::ClampMax { x: self.id, hi }, out, needs, "clamp_max")
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Var> {
        if !scale.is_finite() || !shift.is_finite() {
            return Err(NumericsError::Domain {
                op: "affine",
                detail: "non-finite coefficient".into(),
            });
        }
        let mut out = self.value();
        for v in out.values_mut() {
            *v = scale * *v + shift;
        }
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::Affine { x: self.id, scale }, out, needs, "affine")
    }

    pub fn scale(&self, c: f64) -> Result<Var> {
        self.affine(c, 0.0)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var> {
        self.affine(1.0, c)
    }

    pub fn neg(&self) -> Result<Var> {
        self.affine(-1.0, 0.0)
    }

    pub fn square(&self) -> Result<Var> {
        self.mul(self)
    }

    /// Columns `[offset, offset+len)` of the `[rows, cols]` view.
    pub fn slice_cols(&self, offset: usize, len: usize) -> Result<Var> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        if offset + len > n {
            return Err(NumericsError::Dimension {
                op: "slice_cols",
                detail: format!("slice {}..{} of {} columns", offset, offset + len, n),
            });
        }
        let mut out = vec![0.0; m * len];
        for r in 0..m {
            out[r * len..(r + 1) * len]
                .copy_from_slice(&x.values()[r * n + offset..r * n + offset + len]);
        }
        let value = Tensor::new(vec![m, len], out)?;
        let needs = self.tape.needs_grad(self.id);
        self.tape.record(
            Op::SliceCols {
                x: self.id,
                offset,
                len,
            },
            value,
            needs,
            "slice_cols",
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        if shape.iter().product::<usize>() != x.numel() {
            return Err(NumericsError::Dimension {
                op: "reshape",
                detail: format!("{:?} -> {:?}", x.shape(), shape),
            });
        }
        let value = Tensor::new(shape.to_vec(), x.values().to_vec())?;
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::Reshape { x: self.id }, value, needs, "reshape")
    }

    /// Sum of all elements, as a 1×1 tensor.
    pub fn sum(&self) -> Result<Var> {
        let total: f64 = self.value().values().iter().sum();
        let needs = self.tape.needs_grad(self.id);
        self.tape
            .record(Op::Sum { x: self.id }, Tensor::scalar(total), needs, "sum")
    }

    /// Mean of all elements, as a 1×1 tensor.
    pub fn mean(&self) -> Result<Var> {
        let x = self.value();
        if x.numel() == 0 {
            return Err(NumericsError::Dimension {
                op: "mean",
                detail: "mean of empty tensor".into(),
            });
        }
        let total: f64 = x.values().iter().sum();
        let needs = self.tape.needs_grad(self.id);
        self.tape.record(
            Op::Mean { x: self.id },
            Tensor::scalar(total / x.numel() as f64),
            needs,
            "mean",
        )
    }

    /// Row sums: `[m,n] -> [m,1]`, via matmul with a constant ones column.
    pub fn sum_cols(&self) -> Result<Var> {
        let n = self.value().cols();
        let ones = self.tape.constant(Tensor::ones(&[n, 1]));
        self.matmul(&ones)
    }

    /// Column sums: `[m,n] -> [1,n]`, via matmul with a constant ones row.
    pub fn sum_rows(&self) -> Result<Var> {
        let m = self.value().rows();
        let ones = self.tape.constant(Tensor::ones(&[1, m]));
        ones.matmul(self)
    }

    /// Row-wise log-sum-exp over the last axis: `[m,n] -> [m,1]`.
    ///
    /// The per-row max is subtracted as a constant before exponentiation;
    /// the shift contributes zero net gradient, so gradients are exact.
    pub fn logsumexp_cols(&self) -> Result<Var> {
        let x = self.value();
        let (m, n) = (x.rows(), x.cols());
        let mut maxes = Tensor::zeros(&[m, 1]);
        for r in 0..m {
            let rowmax = x.values()[r * n..(r + 1) * n]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            maxes.values_mut()[r] = rowmax;
        }
        if !maxes.is_finite() {
            return Err(NumericsError::NonFinite { op: "logsumexp" });
        }
        let shift = self.tape.constant(maxes);
        let shifted = self.sub(&shift)?;
        shifted.exp()?.sum_cols()?.log()?.add(&shift)
    }
}
