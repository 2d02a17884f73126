//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] owns every intermediate value of one forward pass. Operations
//! append a node holding the output value plus a closure that maps the
//! output gradient to gradients of the inputs. [`Graph::backward`] walks the
//! tape in reverse. Nothing is shared between graphs, so a graph is the unit
//! of both training steps and inference calls.

use std::cell::{Ref, RefCell};

use super::tensor::{Scalar, Tensor};
use crate::error::Result;

pub(crate) struct BackCtx<'a, S: Scalar> {
    pub grad: &'a Tensor<S>,
    pub inputs: Vec<&'a Tensor<S>>,
    pub output: &'a Tensor<S>,
    pub needs: Vec<bool>,
}

pub(crate) type BackwardFn<S> = Box<dyn Fn(&BackCtx<'_, S>) -> Vec<Option<Tensor<S>>>>;

struct Node<S: Scalar> {
    value: Tensor<S>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<S>>,
    requires_grad: bool,
}

pub struct Graph<S: Scalar = f32> {
    nodes: RefCell<Vec<Node<S>>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, S: Scalar = f32> {
    pub(crate) graph: &'g Graph<S>,
    pub(crate) id: usize,
}

impl<S: Scalar> std::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, node: Node<S>) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(Node {
            value,
            parents: vec![],
            backward: None,
            requires_grad: true,
        })
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.push(Node {
            value,
            parents: vec![],
            backward: None,
            requires_grad: false,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn value(&self, id: usize) -> Ref<'_, Tensor<S>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Records an operation. `forward` sees the input values; `backward`
    /// is stored on the tape.
    pub(crate) fn op<'g>(
        &'g self,
        inputs: &[Var<'g, S>],
        forward: impl FnOnce(&[&Tensor<S>]) -> Result<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Result<Var<'g, S>> {
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor<S>> = inputs.iter().map(|v| &nodes[v.id].value).collect();
            let rg = inputs.iter().any(|v| nodes[v.id].requires_grad);
            (forward(&vals)?, rg)
        };
        Ok(self.push(Node {
            value,
            parents: inputs.iter().map(|v| v.id).collect(),
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
        }))
    }

    /// Gradients of the scalar `root` with respect to every node that
    /// requires one.
    pub fn backward(&self, root: Var<'_, S>) -> Gradients<S> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<S>>> = (0..nodes.len()).map(|_| None).collect();
        let root_val = &nodes[root.id].value;
        grads[root.id] = Some(Tensor::full(root_val.shape(), S::one()));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let ctx = BackCtx {
                grad: &grad,
                inputs: node.parents.iter().map(|&p| &nodes[p].value).collect(),
                output: &node.value,
                needs: node
                    .parents
                    .iter()
                    .map(|&p| nodes[p].requires_grad)
                    .collect(),
            };
            let parent_grads = backward(&ctx);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[p].value.shape(), "grad shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g).expect("gradient shapes agree"),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, var: Var<'_, S>) -> Option<&Tensor<S>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_, S>) -> Option<Tensor<S>> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

impl<'g, S: Scalar> Var<'g, S> {
    pub fn value(&self) -> Ref<'g, Tensor<S>> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn to_tensor(&self) -> Tensor<S> {
        self.value().clone()
    }

    pub fn graph(&self) -> &'g Graph<S> {
        self.graph
    }
}
