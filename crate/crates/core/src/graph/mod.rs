//! Minimal reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records one forward pass; `backward` replays it in reverse
//! topological order (simply reverse insertion order) and accumulates exact
//! gradients into every parameter leaf. Graphs are
//! single-threaded and dropped after the pass; tensors themselves are
//! immutable and freely shared.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

mod check;
pub mod conv;
pub mod elementwise;
mod linalg;
pub mod norm;
mod shape;
mod stft_node;

pub use check::{grad_check, GradCheckTarget};
pub use conv::Padding;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn from_usize(id: usize) -> Self {
        NodeId(id)
    }

    pub fn as_usize(self) -> usize {
        self.0
    }
}

pub(crate) type BackFn<T> = Box<dyn Fn(&Tensor<T>, &mut GradSink<T>)>;

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    back: Option<BackFn<T>>,
}

/// Gradient accumulator indexed by node id.
pub struct GradSink<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> GradSink<T> {
    pub fn add(&mut self, id: NodeId, grad: Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_into(&grad),
            slot => *slot = Some(grad),
        }
    }
}

/// Gradients of one backward pass, indexed by node id.
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// One forward pass under construction.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Graph<T> {
    /// Graph that records backward closures (training / gradient checks).
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// Forward-only graph: no backward closures are kept.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, false, None)
    }

    /// Trainable leaf; gradients accumulate here during backward.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        let rg = self.recording;
        self.push(value, rg, None)
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        requires_grad: bool,
        back: Option<BackFn<T>>,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            requires_grad,
            back,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// True when gradients must flow through an op with these inputs.
    pub(crate) fn needs_grad(&self, ids: &[NodeId]) -> bool {
        self.recording && ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub(crate) fn val(&self, id: NodeId) -> Tensor<T> {
        self.nodes[id.0].value.clone()
    }

    /// Reverse-mode sweep from a scalar loss node. Interior gradients are
    /// dropped as soon as they have been propagated; leaf gradients remain
    /// available in the returned [`Grads`].
    pub fn backward(&self, loss: NodeId) -> Result<Grads<T>> {
        if !self.recording {
            return Err(Error::Usage {
                detail: "backward on an inference graph".into(),
            });
        }
        let node = &self.nodes[loss.0];
        if node.value.numel() != 1 {
            return Err(Error::Usage {
                detail: alloc::format!(
                    "backward requires a scalar loss, got shape {:?}",
                    node.value.shape()
                ),
            });
        }
        let mut sink = GradSink {
            grads: vec![None; self.nodes.len()],
        };
        sink.grads[loss.0] = Some(Tensor::full(node.value.shape(), T::one()));
        for id in (0..=loss.0).rev() {
            if let Some(back) = &self.nodes[id].back {
                if let Some(g) = sink.grads[id].take() {
                    back(&g, &mut sink);
                }
            }
        }
        Ok(Grads { grads: sink.grads })
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph::new()
    }
}
