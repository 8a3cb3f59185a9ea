//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] owns every value computed during a forward pass. Operations
//! append a node holding the result and enough context for its backward
//! rule; [`Tape::backward`] walks the nodes in exact reverse recording order.
//! Nodes that do not depend on a parameter are never assigned a gradient.

mod ops;

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Neighbors;
use crate::matrix::Matrix;
use crate::sparse::SparseAdjacency;

pub use ops::gaussian_kl_rows;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    Spmm(&'a SparseAdjacency, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    ClampMin(Var, f64),
    Concat(Var, Var),
    Slice { src: Var, start: usize },
    SoftmaxRows(Var),
    RowSum(Var),
    Sum(Var),
    SegmentMean(Var, &'a Neighbors),
    SegmentStd { src: Var, nbrs: &'a Neighbors, mean: Matrix },
    GaussianKl { args: [Var; 4], floor: f64 },
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Spmm(..) => "spmm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddBias(..) => "add_bias",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Sqrt(..) => "sqrt",
            Op::Square(..) => "square",
            Op::ClampMin(..) => "clamp_min",
            Op::Concat(..) => "concat_cols",
            Op::Slice { .. } => "slice_cols",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::RowSum(..) => "row_sum",
            Op::Sum(..) => "sum",
            Op::SegmentMean(..) => "segment_mean",
            Op::SegmentStd { .. } => "segment_std",
            Op::GaussianKl { .. } => "gaussian_kl",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulCol(a, b)
            | Op::AddBias(a, b)
            | Op::Concat(a, b) => vec![*a, *b],
            Op::Spmm(_, a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::ClampMin(a, _)
            | Op::SoftmaxRows(a)
            | Op::RowSum(a)
            | Op::Sum(a)
            | Op::SegmentMean(a, _) => vec![*a],
            Op::Slice { src, .. } | Op::SegmentStd { src, .. } => vec![*src],
            Op::GaussianKl { args, .. } => args.to_vec(),
        }
    }
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op<'a>,
    requires_grad: bool,
}

/// One recorded operation, for inspection and debug dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapeRecord {
    pub id: usize,
    pub op: &'static str,
    pub inputs: Vec<usize>,
    pub shape: (usize, usize),
    pub requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Matrix>>,
    clamp_events: usize,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient on backward.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// Constant leaf; gradients never flow into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    /// Borrowed constant leaf; avoids copying large inputs such as the
    /// feature matrix onto every tape.
    pub fn constant_ref(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// Constant copy of `v`, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.as_ref().clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient from the last [`Tape::backward`] call, if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of sigma entries raised to the floor inside divergence kernels.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn records(&self) -> Vec<TapeRecord> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(id, n)| TapeRecord {
                id,
                op: n.op.name(),
                inputs: n.op.inputs().into_iter().map(Var::index).collect(),
                shape: n.value.shape(),
                requires_grad: n.requires_grad,
            })
            .collect()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Matrix, op: Op<'a>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownTensor(v.0))
        }
    }

    /// Populates gradients of the scalar `loss` with respect to every
    /// recorded tensor that depends on a parameter.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        let shape = self.nodes[loss.0].value.shape();
        if shape != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            if self.nodes[id].requires_grad {
                self.propagate(id, &g);
            }
            self.grads[id] = Some(g);
        }
        Ok(())
    }
}
