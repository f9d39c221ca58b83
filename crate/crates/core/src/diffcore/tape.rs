//! Reverse-mode tape.
//!
//! Every forward op appends one node holding its output and the indices of its
//! inputs, so node order is a topological order by construction. `backward`
//! walks the nodes in reverse once. Nodes are never mutated after creation.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    AddBias(usize, usize),
    Sub(usize, usize),
    SubBias(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Pow(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    ClampMin(usize, f64),
    MatMul(usize, usize),
    PairwiseSqDist(usize, usize),
    Sum(usize, Option<usize>),
    Mean(usize, Option<usize>),
    Gather(usize, Rc<[usize]>),
    PairConcat(usize, usize),
    Reshape(usize),
}

/// Operation families, used to name ops in gradient reports and to select a
/// backward rule for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Exp,
    Log,
    Pow,
    Relu,
    Sigmoid,
    ClampMin,
    MatMul,
    PairwiseSqDist,
    Sum,
    Mean,
    Gather,
    PairConcat,
    Reshape,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Leaf,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddScalar,
        OpKind::Exp,
        OpKind::Log,
        OpKind::Pow,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::ClampMin,
        OpKind::MatMul,
        OpKind::PairwiseSqDist,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Gather,
        OpKind::PairConcat,
        OpKind::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Pow => "pow",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::ClampMin => "clamp_min",
            OpKind::MatMul => "matmul",
            OpKind::PairwiseSqDist => "pairwise_sq_dist",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Gather => "gather",
            OpKind::PairConcat => "pair_concat",
            OpKind::Reshape => "reshape",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown op '{s}'")))
    }
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) | Op::AddBias(..) => OpKind::Add,
            Op::Sub(..) | Op::SubBias(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Pow(..) => OpKind::Pow,
            Op::Relu(..) => OpKind::Relu,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::ClampMin(..) => OpKind::ClampMin,
            Op::MatMul(..) => OpKind::MatMul,
            Op::PairwiseSqDist(..) => OpKind::PairwiseSqDist,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::Gather(..) => OpKind::Gather,
            Op::PairConcat(..) => OpKind::PairConcat,
            Op::Reshape(..) => OpKind::Reshape,
        }
    }

    fn inputs(&self) -> [Option<usize>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::Add(a, b)
            | Op::AddBias(a, b)
            | Op::Sub(a, b)
            | Op::SubBias(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::PairwiseSqDist(a, b)
            | Op::PairConcat(a, b) => [Some(a), Some(b)],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Pow(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::ClampMin(a, _)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::Gather(a, _)
            | Op::Reshape(a) => [Some(a), None],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Record of executed operations. Confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Cell<Option<OpKind>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A constant input; gradients are not tracked through it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, false)
    }

    /// A differentiable input (`requires_grad`).
    pub fn variable(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, true)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Makes the backward rule of `kind` deliberately wrong (doubles its
    /// upstream gradient). Only for negative-control gradient checks.
    pub fn inject_fault(&self, kind: Option<OpKind>) {
        self.fault.set(kind);
    }

    /// Smallest distance from a differentiable ReLU or clamp input to its
    /// kink; `None` if the tape has no such op. Finite differences are only
    /// meaningful when this exceeds the perturbation.
    pub fn kink_margin(&self) -> Option<f64> {
        let nodes = self.nodes.borrow();
        nodes
            .iter()
            .filter(|n| n.needs_grad)
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some((a, 0.0)),
                Op::ClampMin(a, lo) => Some((a, lo)),
                _ => None,
            })
            .map(|(a, lo)| nodes[a].value.data().iter().fold(f64::INFINITY, |m, &x| m.min((x - lo).abs())))
            .reduce(f64::min)
    }

    fn push_leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = op
            .inputs()
            .iter()
            .flatten()
            .any(|&i| nodes[i].needs_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(root.tape, self) {
            return Err(Error::contract("backward root belongs to another tape"));
        }
        let nodes = self.nodes.borrow();
        let root_value = &nodes[root.id].value;
        if root_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let fault = self.fault.get();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(root_value.map(|_| 1.0));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(mut g) = grads[id].take() else {
                continue;
            };
            if fault == Some(node.op.kind()) {
                g = g.map(|x| 2.0 * x);
            }
            let val = |i: usize| &nodes[i].value;
            let needs = |i: usize| nodes[i].needs_grad;
            let y = &node.value;
            match node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, &g);
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, &g);
                    }
                }
                Op::AddBias(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, &g);
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, &column_sums(&g, 1.0));
                    }
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, &g);
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, &g.map(|x| -x));
                    }
                }
                Op::SubBias(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, &g);
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, &column_sums(&g, -1.0));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, &g.zip_map(val(b), |g, b| g * b));
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, &g.zip_map(val(a), |g, a| g * a));
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, a, &g.map(|x| c * x)),
                Op::AddScalar(a) => accumulate(&mut grads, a, &g),
                Op::Exp(a) => accumulate(&mut grads, a, &g.zip_map(y, |g, y| g * y)),
                Op::Log(a) => accumulate(&mut grads, a, &g.zip_map(val(a), |g, x| g / x)),
                Op::Pow(a, e) => {
                    let d = g.zip_map(val(a), |g, x| {
                        // d/dx x^e is unbounded at 0 for e < 1; treated as 0.
                        if x == 0.0 && e < 1.0 {
                            0.0
                        } else {
                            g * e * x.powf(e - 1.0)
                        }
                    });
                    accumulate(&mut grads, a, &d);
                }
                Op::Relu(a) => {
                    let d = g.zip_map(val(a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, a, &d);
                }
                Op::Sigmoid(a) => {
                    accumulate(&mut grads, a, &g.zip_map(y, |g, y| g * y * (1.0 - y)))
                }
                Op::ClampMin(a, lo) => {
                    let d = g.zip_map(val(a), |g, x| if x >= lo { g } else { 0.0 });
                    accumulate(&mut grads, a, &d);
                }
                Op::MatMul(a, b) => {
                    if needs(a) {
                        let bt = val(b).transpose()?;
                        accumulate(&mut grads, a, &tensor::matmul(&g, &bt)?);
                    }
                    if needs(b) {
                        let at = val(a).transpose()?;
                        accumulate(&mut grads, b, &tensor::matmul(&at, &g)?);
                    }
                }
                Op::PairwiseSqDist(q, p) => {
                    let (qv, pv) = (val(q), val(p));
                    let (n, k, m) = (qv.rows(), pv.rows(), qv.cols());
                    let mut gq = vec![0.0; n * m];
                    let mut gp = vec![0.0; k * m];
                    for i in 0..n {
                        let qi = qv.row(i);
                        for j in 0..k {
                            let gij = g.data()[i * k + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let pj = pv.row(j);
                            for d in 0..m {
                                let diff = 2.0 * gij * (qi[d] - pj[d]);
                                gq[i * m + d] += diff;
                                gp[j * m + d] -= diff;
                            }
                        }
                    }
                    if needs(q) {
                        accumulate(&mut grads, q, &Tensor::from_parts(qv.shape().to_vec(), gq));
                    }
                    if needs(p) {
                        accumulate(&mut grads, p, &Tensor::from_parts(pv.shape().to_vec(), gp));
                    }
                }
                Op::Sum(a, axis) => {
                    accumulate(&mut grads, a, &expand_reduced(&g, val(a), axis, 1.0));
                }
                Op::Mean(a, axis) => {
                    let av = val(a);
                    let n = match axis {
                        Some(ax) => av.shape()[ax],
                        None => av.len(),
                    };
                    accumulate(&mut grads, a, &expand_reduced(&g, av, axis, 1.0 / n as f64));
                }
                Op::Gather(a, ref idx) => {
                    let mut d = val(a).zeros_like();
                    for (k, &i) in idx.iter().enumerate() {
                        d.data_mut()[i] += g.data()[k];
                    }
                    accumulate(&mut grads, a, &d);
                }
                Op::PairConcat(q, p) => {
                    let (qv, pv) = (val(q), val(p));
                    let (n, k, mq, mp) = (qv.rows(), pv.rows(), qv.cols(), pv.cols());
                    let mut gq = vec![0.0; n * mq];
                    let mut gp = vec![0.0; k * mp];
                    for i in 0..n {
                        for j in 0..k {
                            let row = g.row(i * k + j);
                            for d in 0..mq {
                                gq[i * mq + d] += row[d];
                            }
                            for d in 0..mp {
                                gp[j * mp + d] += row[mq + d];
                            }
                        }
                    }
                    if needs(q) {
                        accumulate(&mut grads, q, &Tensor::from_parts(qv.shape().to_vec(), gq));
                    }
                    if needs(p) {
                        accumulate(&mut grads, p, &Tensor::from_parts(pv.shape().to_vec(), gp));
                    }
                }
                Op::Reshape(a) => {
                    let shape = val(a).shape().to_vec();
                    accumulate(&mut grads, a, &Tensor::from_parts(shape, g.into_data()));
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: &Tensor) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn column_sums(g: &Tensor, sign: f64) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for i in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(i)) {
            *o += sign * x;
        }
    }
    Tensor::from_parts(vec![c], out)
}

/// Splits `shape` around `axis` into (outer, len, inner) strides.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn expand_reduced(g: &Tensor, input: &Tensor, axis: Option<usize>, factor: f64) -> Tensor {
    match axis {
        None => {
            let v = g.data()[0] * factor;
            input.map(|_| v)
        }
        Some(ax) => {
            let (outer, len, inner) = axis_split(input.shape(), ax);
            let mut out = vec![0.0; input.len()];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        out[(o * len + l) * inner + i] = g.data()[o * inner + i] * factor;
                    }
                }
            }
            Tensor::from_parts(input.shape().to_vec(), out)
        }
    }
}

/// Gradients produced by one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`, if `var` influenced it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros for variables the root does
    /// not depend on.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| var.value().zeros_like())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.value().shape())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].needs_grad
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::contract("operands live on different tapes"))
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var<'t> {
        self.tape.push(value, op)
    }

    /// Same-shape add, or matrix + row-vector bias broadcast.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() == b.shape() {
            let v = a.zip_map(&b, |x, y| x + y);
            Ok(self.tape.push(v, Op::Add(self.id, other.id)))
        } else if is_bias(&a, &b) {
            let v = bias_map(&a, &b, |x, y| x + y);
            Ok(self.tape.push(v, Op::AddBias(self.id, other.id)))
        } else {
            Err(Error::dim(format!("add: {:?} vs {:?}", a.shape(), b.shape())))
        }
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() == b.shape() {
            let v = a.zip_map(&b, |x, y| x - y);
            Ok(self.tape.push(v, Op::Sub(self.id, other.id)))
        } else if is_bias(&a, &b) {
            let v = bias_map(&a, &b, |x, y| x - y);
            Ok(self.tape.push(v, Op::SubBias(self.id, other.id)))
        } else {
            Err(Error::dim(format!("sub: {:?} vs {:?}", a.shape(), b.shape())))
        }
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::dim(format!("mul: {:?} vs {:?}", a.shape(), b.shape())));
        }
        let v = a.zip_map(&b, |x, y| x * y);
        Ok(self.tape.push(v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(self.value().map(|x| c * x), Op::Scale(self.id, c))
    }

    /// `x / c`. The forward divides (so `t / t == 1` exactly); backward is the
    /// [`OpKind::Scale`] rule with factor `1 / c`.
    pub fn div_scalar(&self, c: f64) -> Var<'t> {
        self.unary(self.value().map(|x| x / c), Op::Scale(self.id, 1.0 / c))
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(self.value().map(|x| x + c), Op::AddScalar(self.id))
    }

    /// `1 - x`.
    pub fn one_minus(&self) -> Var<'t> {
        self.neg().add_scalar(1.0)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(self.value().map(f64::exp), Op::Exp(self.id))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        let v = self.value();
        if let Some(x) = v.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("log of non-positive value {x}")));
        }
        Ok(self.unary(v.map(f64::ln), Op::Log(self.id)))
    }

    /// `x^e`. Non-integer exponents need non-negative input.
    pub fn pow_scalar(&self, e: f64) -> Result<Var<'t>> {
        let v = self.value();
        if e.fract() != 0.0 {
            if let Some(x) = v.data().iter().find(|&&x| x < 0.0) {
                return Err(Error::Domain(format!(
                    "non-integer power {e} of negative value {x}"
                )));
            }
        }
        Ok(self.unary(v.map(|x| x.powf(e)), Op::Pow(self.id, e)))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(self.value().map(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(
            self.value().map(|x| 1.0 / (1.0 + (-x).exp())),
            Op::Sigmoid(self.id),
        )
    }

    /// `max(x, lo)`; gradient passes where `x >= lo`.
    pub fn clamp_min(&self, lo: f64) -> Var<'t> {
        self.unary(self.value().map(|x| x.max(lo)), Op::ClampMin(self.id, lo))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let v = tensor::matmul(&self.value(), &other.value())?;
        Ok(self.tape.push(v, Op::MatMul(self.id, other.id)))
    }

    /// `[n x m] , [k x m] -> [n x k]` squared Euclidean distances.
    pub fn pairwise_sq_dist(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let v = tensor::pairwise_sq_dist(&self.value(), &other.value())?;
        Ok(self.tape.push(v, Op::PairwiseSqDist(self.id, other.id)))
    }

    fn reduce(&self, axis: Option<usize>, mean: bool) -> Result<Var<'t>> {
        let v = self.value();
        let (shape, data) = match axis {
            None => {
                let s: f64 = v.data().iter().sum();
                let s = if mean { s / v.len() as f64 } else { s };
                (Vec::new(), vec![s])
            }
            Some(ax) => {
                if ax >= v.rank() {
                    return Err(Error::dim(format!(
                        "axis {ax} out of range for rank {}",
                        v.rank()
                    )));
                }
                let (outer, len, inner) = axis_split(v.shape(), ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            out[o * inner + i] += v.data()[(o * len + l) * inner + i];
                        }
                    }
                }
                if mean {
                    out.iter_mut().for_each(|x| *x /= len as f64);
                }
                let mut shape = v.shape().to_vec();
                shape.remove(ax);
                (shape, out)
            }
        };
        let op = if mean {
            Op::Mean(self.id, axis)
        } else {
            Op::Sum(self.id, axis)
        };
        Ok(self.unary(Tensor::from_parts(shape, data), op))
    }

    pub fn sum(&self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce(axis, false)
    }

    pub fn mean(&self, axis: Option<usize>) -> Result<Var<'t>> {
        self.reduce(axis, true)
    }

    pub fn sum_all(&self) -> Var<'t> {
        self.reduce(None, false).expect("full reduction cannot fail")
    }

    /// Flat-index gather into a vector.
    pub fn gather(&self, flat_idx: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        if flat_idx.is_empty() {
            return Err(Error::dim("gather with no indices"));
        }
        if let Some(&i) = flat_idx.iter().find(|&&i| i >= v.len()) {
            return Err(Error::dim(format!("gather index {i} out of range {}", v.len())));
        }
        let data = flat_idx.iter().map(|&i| v.data()[i]).collect();
        Ok(self.unary(
            Tensor::from_parts(vec![flat_idx.len()], data),
            Op::Gather(self.id, flat_idx.into()),
        ))
    }

    /// Row `i*k + j` of the result is `[self[i], other[j]]`.
    pub fn pair_concat(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (q, p) = (self.value(), other.value());
        if q.rank() != 2 || p.rank() != 2 {
            return Err(Error::dim("pair_concat needs matrices"));
        }
        let (n, k) = (q.rows(), p.rows());
        let w = q.cols() + p.cols();
        let mut data = Vec::with_capacity(n * k * w);
        for i in 0..n {
            for j in 0..k {
                data.extend_from_slice(q.row(i));
                data.extend_from_slice(p.row(j));
            }
        }
        Ok(self.tape.push(
            Tensor::from_parts(vec![n * k, w], data),
            Op::PairConcat(self.id, other.id),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let v = self.value().reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }
}

fn is_bias(a: &Tensor, b: &Tensor) -> bool {
    a.rank() == 2 && b.rank() == 1 && a.cols() == b.len()
}

fn bias_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let c = a.cols();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(k, &x)| f(x, b.data()[k % c]))
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}
