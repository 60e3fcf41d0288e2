//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Nodes that
//! do not depend on a gradient-requiring leaf carry no backward closure, so
//! inference through a graph built with [`Graph::inference`] costs only the
//! forward arithmetic.

mod conv;
mod norm;
mod ops;

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

pub use conv::ConvSpec;

use crate::nn::{ParamId, ParamStore};
use crate::tensor::Tensor;

type BackwardFn = Box<dyn FnOnce(&Tensor, &mut Grads)>;

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Gradient accumulator indexed by node id.
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    /// Adds `g` into the gradient of node `id`.
    pub fn accumulate(&mut self, id: usize, g: Tensor) {
        match &mut self.slots[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.slots.get(var.id).and_then(Option::as_ref)
    }
}

pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grad_enabled: bool,
    training: bool,
    params: RefCell<Vec<Option<usize>>>,
    buffer_updates: RefCell<Vec<(ParamId, Tensor)>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl core::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    /// Graph that records gradients; normalization layers use batch statistics.
    pub fn training() -> Self {
        Self::with_mode(true, true)
    }

    /// Forward-only graph; normalization layers use running statistics.
    pub fn inference() -> Self {
        Self::with_mode(false, false)
    }

    pub fn with_mode(grad_enabled: bool, training: bool) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            grad_enabled,
            training,
            params: RefCell::new(Vec::new()),
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Arc::new(value), false, None)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let rg = self.grad_enabled;
        self.push_node(Arc::new(value), rg, None)
    }

    /// The node holding parameter `id`; created on first use, shared after.
    pub fn param<'g>(&'g self, store: &ParamStore, id: ParamId) -> Var<'g> {
        {
            let params = self.params.borrow();
            if let Some(Some(node)) = params.get(id.0) {
                return Var {
                    graph: self,
                    id: *node,
                };
            }
        }
        let rg = self.grad_enabled && store.is_trainable(id);
        let var = self.push_node(store.shared(id), rg, None);
        let mut params = self.params.borrow_mut();
        if params.len() <= id.0 {
            params.resize(id.0 + 1, None);
        }
        params[id.0] = Some(var.id);
        var
    }

    /// Queues a non-trainable buffer update (e.g. running statistics),
    /// applied by the caller after the step.
    pub fn record_buffer_update(&self, id: ParamId, value: Tensor) {
        self.buffer_updates.borrow_mut().push((id, value));
    }

    pub fn take_buffer_updates(&self) -> Vec<(ParamId, Tensor)> {
        core::mem::take(&mut *self.buffer_updates.borrow_mut())
    }

    fn push_node(
        &self,
        value: Arc<Tensor>,
        requires_grad: bool,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            backward,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records an operation. `backward` receives the output gradient and
    /// is dropped unless some input requires a gradient.
    pub(crate) fn op<'g>(
        &'g self,
        value: Tensor,
        inputs: &[Var<'g>],
        backward: impl FnOnce(&Tensor, &mut Grads) + 'static,
    ) -> Var<'g> {
        let rg = self.grad_enabled && inputs.iter().any(|v| v.requires_grad());
        let bw: Option<BackwardFn> = if rg { Some(Box::new(backward)) } else { None };
        self.push_node(Arc::new(value), rg, bw)
    }

    /// Reverse pass from a one-element `output`.
    pub fn backward(&self, output: Var<'_>) -> Grads {
        let mut nodes = self.nodes.borrow_mut();
        let n = nodes.len();
        let mut grads = Grads {
            slots: (0..n).map(|_| None).collect(),
        };
        let seed = nodes[output.id].value.map(|_| 1.0);
        grads.slots[output.id] = Some(seed);
        for id in (0..=output.id).rev() {
            let Some(bw) = nodes[id].backward.take() else {
                continue;
            };
            let Some(g) = grads.slots[id].take() else {
                continue;
            };
            bw(&g, &mut grads);
            grads.slots[id] = Some(g);
        }
        grads
    }

    /// Gradients of every parameter touched by this graph.
    pub fn param_grads(&self, grads: &Grads) -> Vec<(ParamId, Tensor)> {
        let params = self.params.borrow();
        params
            .iter()
            .enumerate()
            .filter_map(|(pid, node)| {
                let node = (*node)?;
                grads.slots[node].clone().map(|g| (ParamId(pid), g))
            })
            .collect()
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

#[cfg(test)]
pub(crate) mod check {
    //! Central finite differences against the analytic reverse pass.
    use super::*;

    /// Checks d(sum(f(x) * w))/dx for a fixed random weighting `w`.
    pub fn gradcheck(
        inputs: &[Tensor],
        f: impl for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
        tol: f64,
    ) {
        let eval = |xs: &[Tensor]| -> (f64, Vec<Tensor>) {
            let g = Graph::training();
            let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone())).collect();
            let out = f(&g, &vars);
            let shape = out.shape();
            let w: Vec<f64> = (0..crate::tensor::numel(&shape))
                .map(|i| libm::sin(i as f64 * 1.37 + 0.3) + 0.1)
                .collect();
            let wv = g.constant(Tensor::new(&shape, w));
            let loss = g.sum_all(g.mul(out, wv));
            let grads = g.backward(loss);
            let gs = vars
                .iter()
                .map(|v| {
                    grads
                        .get(*v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(&v.shape()))
                })
                .collect();
            (loss.item(), gs)
        };
        let (_, analytic) = eval(inputs);
        let h = 1e-6;
        for (k, x) in inputs.iter().enumerate() {
            for i in 0..x.numel() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[i] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[i] -= h;
                let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let a = analytic[k].data()[i];
                let err = (a - numeric).abs() / (1.0f64).max(a.abs().max(numeric.abs()));
                assert!(
                    err < tol,
                    "input {k} elem {i}: analytic {a} numeric {numeric} (rel err {err})"
                );
            }
        }
    }
}
