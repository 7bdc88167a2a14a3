//! Minimal reverse-mode autodiff engine.
//!
//! A [`Tape`] records every forward op eagerly; [`Tape::backward`] replays the
//! record in reverse to accumulate gradients. Tensors are referenced by
//! [`NodeId`] into the tape, which keeps ownership trivial and the whole
//! engine auditable. Only f64 is supported and broadcasting is restricted to
//! scalar operands and trailing-shape (leading-batch) broadcast.
//!
//! One tape belongs to one forward/backward execution; independent runs own
//! independent tapes.

mod adam;
pub mod gradcheck;
mod ops;
mod params;

pub use adam::{Adam, AdamConfig};
pub use params::{Param, ParamStore};

use crate::error::{CcnpError, Result};

/// Handle to a tensor recorded on a [`Tape`].
pub type NodeId = usize;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    Concat(Vec<NodeId>, usize),
    Relu(NodeId),
    Softplus(NodeId),
    Mean(NodeId, Option<usize>),
    Sum(NodeId, Option<usize>),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    CosineSim(NodeId, NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    GatherRows(NodeId, Vec<usize>),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    /// Accumulated gradient; stays zero until a backward pass reaches the node.
    pub grad: Vec<f64>,
    pub requires_grad: bool,
    /// Back-reference into a [`ParamStore`] for parameter leaves.
    pub param: Option<usize>,
}

/// The op record for one forward execution.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
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

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].grad
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Scalar value of a single-element tensor.
    pub fn value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].data.len(), 1);
        self.nodes[id].data[0]
    }

    /// Record a constant or variable leaf.
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> NodeId {
        assert_eq!(
            numel(&shape),
            data.len(),
            "leaf data length must match shape product"
        );
        self.push(Op::Leaf, shape, data, requires_grad, None)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> NodeId {
        self.leaf(shape, data, false)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(vec![1], vec![v], false)
    }

    /// Record a leaf backed by a parameter; gradients accumulated on the tape
    /// can later be written back with [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, param_id: usize) -> NodeId {
        let p = store.get(param_id);
        self.push(
            Op::Leaf,
            p.shape.clone(),
            p.value.clone(),
            true,
            Some(param_id),
        )
    }

    pub(crate) fn push(
        &mut self,
        op: Op,
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        param: Option<usize>,
    ) -> NodeId {
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            op,
            shape,
            data,
            grad,
            requires_grad,
            param,
        });
        self.nodes.len() - 1
    }

    pub(crate) fn check_finite(&self, id: NodeId, op: &'static str) -> Result<NodeId> {
        if self.nodes[id].data.iter().all(|v| v.is_finite()) {
            Ok(id)
        } else {
            Err(CcnpError::NonFinite { op })
        }
    }

    /// Reverse pass from a scalar loss. Gradients are accumulated into
    /// `node.grad`, so repeated backward calls add up until the tape is
    /// dropped or [`Tape::zero_grad`] is called.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if numel(&self.nodes[loss].shape) != 1 {
            return Err(CcnpError::NonScalarLoss {
                shape: self.nodes[loss].shape.clone(),
            });
        }
        // Per-pass adjoint buffers keep successive backward calls linear:
        // only the final adjoints are added into node.grad.
        let mut adjoint: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adjoint[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let out = match adjoint[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &out, &mut adjoint);
            let node = &mut self.nodes[id];
            for (g, a) in node.grad.iter_mut().zip(&out) {
                *g += a;
            }
        }
        Ok(())
    }

    /// Add the adjoint `delta` of node `input` into the per-pass buffer.
    pub(crate) fn bump(adjoint: &mut [Option<Vec<f64>>], nodes: &[Node], input: NodeId, f: impl FnOnce(&mut [f64])) {
        if !nodes[input].requires_grad {
            return;
        }
        let buf = adjoint[input].get_or_insert_with(|| vec![0.0; nodes[input].data.len()]);
        f(buf);
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            for g in &mut n.grad {
                *g = 0.0;
            }
        }
    }

    /// Add tape gradients of parameter leaves into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            if let Some(pid) = node.param {
                store.add_grad(pid, &node.grad);
            }
        }
    }
}

#[cfg(test)]
mod tests;
