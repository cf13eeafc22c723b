//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Every forward call appends one node holding the operation, its parent
//! node ids, and the computed value; nodes are therefore already in
//! topological order and the backward sweep is a single reverse pass that
//! visits each node exactly once, accumulating cotangents additively when a
//! value (typically a shared weight) is used more than once.
//!
//! Complex values ride along as (re, im) tensor pairs behind [`CVar`]; the
//! transform ops treat them as real-linear maps, which makes the FFT's
//! backward rule simply the inverse unitary transform applied to the
//! cotangent pair.

mod backward;
pub mod grad_check;

pub use grad_check::{grad_check, NamedTensors};

use crate::coords;
use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{self, CTensor, Tensor};
use std::collections::BTreeMap;

/// Handle to a real-valued node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Handle to a complex-valued node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CVar(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) enum Value {
    Real(Tensor),
    Complex(CTensor),
}

impl Value {
    pub(crate) fn as_real(&self) -> &Tensor {
        match self {
            Value::Real(t) => t,
            Value::Complex(_) => panic!("complex node used as real"),
        }
    }

    pub(crate) fn as_complex(&self) -> &CTensor {
        match self {
            Value::Complex(t) => t,
            Value::Real(_) => panic!("real node used as complex"),
        }
    }
}

/// Recorded operation. Parents are node ids; sampling ops also carry their
/// (non-differentiated) coordinates, shaping ops their target dims.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRowBias(usize, usize),
    MatMul(usize, usize),
    Transpose2(usize),
    Reshape(usize),
    Concat(Vec<usize>, usize),
    SliceAxis(usize, usize, usize, usize),
    Relu(usize),
    Softmax(usize, usize),
    Conv2d(usize, usize, usize),
    PConv(usize, usize, usize),
    BilinearSample(usize, Tensor),
    NearestSample(usize, Tensor),
    Sum(usize),
    L1Loss(usize, usize),
    Comp(usize, usize),
    CRe(usize),
    CIm(usize),
    CAdd(usize, usize),
    CMatMul(usize, usize),
    CTranspose2(usize),
    CReshape(usize),
    Fft2R(usize),
    Fft2C(usize),
    IFft2(usize),
}

/// Fieldless mirror of [`Op`] for the backward-rule registry audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddRowBias,
    MatMul,
    Transpose2,
    Reshape,
    Concat,
    SliceAxis,
    Relu,
    Softmax,
    Conv2d,
    PConv,
    BilinearSample,
    NearestSample,
    Sum,
    L1Loss,
    Comp,
    CRe,
    CIm,
    CAdd,
    CMatMul,
    CTranspose2,
    CReshape,
    Fft2R,
    Fft2C,
    IFft2,
}

/// Every differentiable operation the tape can record (leaves excluded).
pub const ALL_OPS: &[OpKind] = &[
    OpKind::Add,
    OpKind::Sub,
    OpKind::Mul,
    OpKind::Scale,
    OpKind::AddRowBias,
    OpKind::MatMul,
    OpKind::Transpose2,
    OpKind::Reshape,
    OpKind::Concat,
    OpKind::SliceAxis,
    OpKind::Relu,
    OpKind::Softmax,
    OpKind::Conv2d,
    OpKind::PConv,
    OpKind::BilinearSample,
    OpKind::NearestSample,
    OpKind::Sum,
    OpKind::L1Loss,
    OpKind::Comp,
    OpKind::CRe,
    OpKind::CIm,
    OpKind::CAdd,
    OpKind::CMatMul,
    OpKind::CTranspose2,
    OpKind::CReshape,
    OpKind::Fft2R,
    OpKind::Fft2C,
    OpKind::IFft2,
];

impl Op {
    #[cfg(test)]
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Transpose2(..) => OpKind::Transpose2,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Concat(..) => OpKind::Concat,
            Op::SliceAxis(..) => OpKind::SliceAxis,
            Op::Relu(..) => OpKind::Relu,
            Op::Softmax(..) => OpKind::Softmax,
            Op::Conv2d(..) => OpKind::Conv2d,
            Op::PConv(..) => OpKind::PConv,
            Op::BilinearSample(..) => OpKind::BilinearSample,
            Op::NearestSample(..) => OpKind::NearestSample,
            Op::Sum(..) => OpKind::Sum,
            Op::L1Loss(..) => OpKind::L1Loss,
            Op::Comp(..) => OpKind::Comp,
            Op::CRe(..) => OpKind::CRe,
            Op::CIm(..) => OpKind::CIm,
            Op::CAdd(..) => OpKind::CAdd,
            Op::CMatMul(..) => OpKind::CMatMul,
            Op::CTranspose2(..) => OpKind::CTranspose2,
            Op::CReshape(..) => OpKind::CReshape,
            Op::Fft2R(..) => OpKind::Fft2R,
            Op::Fft2C(..) => OpKind::Fft2C,
            Op::IFft2(..) => OpKind::IFft2,
        }
    }
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Value,
}

/// Gradients keyed by parameter name, as produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub(crate) fn insert(&mut self, name: String, grad: Tensor) {
        self.map.insert(name, grad);
    }
}

#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) params: Vec<(String, usize)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Value) -> usize {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Record a real constant (not tracked by name; gradient discarded).
    pub fn constant(&mut self, t: Tensor) -> Var {
        Var(self.push(Op::Leaf, Value::Real(t)))
    }

    pub fn constant_c(&mut self, t: CTensor) -> CVar {
        CVar(self.push(Op::Leaf, Value::Complex(t)))
    }

    /// Record a named parameter leaf. Names must be unique per tape.
    pub fn param(&mut self, name: &str, t: Tensor) -> Result<Var> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::Usage(format!(
                "parameter {name:?} registered twice on one tape"
            )));
        }
        let id = self.push(Op::Leaf, Value::Real(t));
        self.params.push((name.to_string(), id));
        Ok(Var(id))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.as_real()
    }

    pub fn cvalue(&self, v: CVar) -> &CTensor {
        self.nodes[v.0].value.as_complex()
    }

    // -- real ops -----------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(Var(self.push(Op::Add(a.0, b.0), Value::Real(out))))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(Var(self.push(Op::Sub(a.0, b.0), Value::Real(out))))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(Var(self.push(Op::Mul(a.0, b.0), Value::Real(out))))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        Var(self.push(Op::Scale(a.0, c), Value::Real(out)))
    }

    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let out = tensor::add_row_bias(self.value(x), self.value(b))?;
        Ok(Var(self.push(Op::AddRowBias(x.0, b.0), Value::Real(out))))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(Var(self.push(Op::MatMul(a.0, b.0), Value::Real(out))))
    }

    pub fn transpose2(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose2()?;
        Ok(Var(self.push(Op::Transpose2(a.0), Value::Real(out))))
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(dims)?;
        Ok(Var(self.push(Op::Reshape(a.0), Value::Real(out))))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let out = tensor::concat(&tensors, axis)?;
        let ids = parts.iter().map(|v| v.0).collect();
        Ok(Var(self.push(Op::Concat(ids, axis), Value::Real(out))))
    }

    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = tensor::slice_axis(self.value(a), axis, start, len)?;
        Ok(Var(self.push(
            Op::SliceAxis(a.0, axis, start, len),
            Value::Real(out),
        )))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        Var(self.push(Op::Relu(a.0), Value::Real(out)))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = tensor::softmax(self.value(a), axis)?;
        Ok(Var(self.push(Op::Softmax(a.0, axis), Value::Real(out))))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = tensor::conv2d(self.value(x), self.value(w), self.value(b))?;
        Ok(Var(self.push(Op::Conv2d(x.0, w.0, b.0), Value::Real(out))))
    }

    pub fn pconv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = tensor::pconv(self.value(x), self.value(w), self.value(b))?;
        Ok(Var(self.push(Op::PConv(x.0, w.0, b.0), Value::Real(out))))
    }

    pub fn bilinear_sample(&mut self, feat: Var, coords: &Tensor) -> Result<Var> {
        let out = coords::bilinear_sample(self.value(feat), coords)?;
        Ok(Var(self.push(
            Op::BilinearSample(feat.0, coords.clone()),
            Value::Real(out),
        )))
    }

    pub fn nearest_sample(&mut self, feat: Var, coords: &Tensor) -> Result<Var> {
        let out = coords::nearest_sample(self.value(feat), coords)?;
        Ok(Var(self.push(
            Op::NearestSample(feat.0, coords.clone()),
            Value::Real(out),
        )))
    }

    /// Sum of all entries, as a single-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        Var(self.push(Op::Sum(a.0), Value::Real(out)))
    }

    /// Mean absolute difference of two same-shaped tensors.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.value(a).sub(self.value(b))?;
        let out = Tensor::scalar(diff.data().iter().map(|v| v.abs()).sum::<f64>() / diff.numel() as f64);
        Ok(Var(self.push(Op::L1Loss(a.0, b.0), Value::Real(out))))
    }

    // -- complex ops ---------------------------------------------------------

    /// Pair two real nodes into a complex node.
    pub fn comp(&mut self, re: Var, im: Var) -> Result<CVar> {
        let out = tensor::comp(self.value(re), self.value(im))?;
        Ok(CVar(self.push(Op::Comp(re.0, im.0), Value::Complex(out))))
    }

    pub fn c_re(&mut self, a: CVar) -> Var {
        let out = self.cvalue(a).re().clone();
        Var(self.push(Op::CRe(a.0), Value::Real(out)))
    }

    pub fn c_im(&mut self, a: CVar) -> Var {
        let out = self.cvalue(a).im().clone();
        Var(self.push(Op::CIm(a.0), Value::Real(out)))
    }

    pub fn c_add(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let out = self.cvalue(a).add(self.cvalue(b))?;
        Ok(CVar(self.push(Op::CAdd(a.0, b.0), Value::Complex(out))))
    }

    pub fn c_matmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let out = tensor::cmatmul(self.cvalue(a), self.cvalue(b))?;
        Ok(CVar(self.push(Op::CMatMul(a.0, b.0), Value::Complex(out))))
    }

    pub fn c_transpose2(&mut self, a: CVar) -> Result<CVar> {
        let out = self.cvalue(a).transpose2()?;
        Ok(CVar(self.push(Op::CTranspose2(a.0), Value::Complex(out))))
    }

    pub fn c_reshape(&mut self, a: CVar, dims: &[usize]) -> Result<CVar> {
        let out = self.cvalue(a).reshape(dims)?;
        Ok(CVar(self.push(Op::CReshape(a.0), Value::Complex(out))))
    }

    /// Unitary 2-D DFT of a real node.
    pub fn fft2(&mut self, a: Var) -> Result<CVar> {
        let out = fft::fft2(self.value(a))?;
        Ok(CVar(self.push(Op::Fft2R(a.0), Value::Complex(out))))
    }

    /// Unitary 2-D DFT of a complex node.
    pub fn fft2_c(&mut self, a: CVar) -> Result<CVar> {
        let out = fft::fft2_c(self.cvalue(a))?;
        Ok(CVar(self.push(Op::Fft2C(a.0), Value::Complex(out))))
    }

    /// Unitary inverse 2-D DFT of a complex node.
    pub fn ifft2(&mut self, a: CVar) -> Result<CVar> {
        let out = fft::ifft2(self.cvalue(a))?;
        Ok(CVar(self.push(Op::IFft2(a.0), Value::Complex(out))))
    }

    /// Reverse sweep from a scalar loss node. Returns one gradient per
    /// registered parameter; parameters the loss never touched get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        backward::run(self, loss)
    }
}

#[cfg(test)]
mod tests;
