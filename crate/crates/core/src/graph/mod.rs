//! Reverse-mode automatic differentiation over tensors.
//!
//! A [`Var`] wraps an immutable tensor value plus the recorded operation that
//! produced it. Building a computation with the functions in [`ops`] records
//! the graph; [`backward`] walks it once in reverse and returns gradients for
//! every leaf created with [`Var::leaf`].
//!
//! Nodes whose ancestors are all constants record neither parents nor a
//! backward closure, so pure inference through the same code path keeps no
//! history.

pub mod ops;

use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Backward closure: given the gradient flowing into this node and the parent
/// vars, produce the gradient contribution for each parent (None when a
/// parent needs no gradient).
type BackwardFn<F> = Box<dyn Fn(&Tensor<F>, &[Var<F>]) -> Vec<Option<Tensor<F>>>>;

struct Node<F: Scalar> {
    id: u64,
    value: Tensor<F>,
    needs_grad: bool,
    parents: Vec<Var<F>>,
    backward: Option<BackwardFn<F>>,
}

/// A node in the computation graph. Cloning is cheap (reference-counted).
///
/// Graphs are single-threaded by construction; concurrent workers each build
/// their own graph over shared plain tensors.
#[derive(Clone)]
pub struct Var<F: Scalar> {
    node: Rc<Node<F>>,
}

impl<F: Scalar> Var<F> {
    /// A differentiable leaf (a parameter).
    pub fn leaf(value: Tensor<F>) -> Self {
        Self {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                value,
                needs_grad: true,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    /// A constant input: no gradient is tracked through it.
    pub fn constant(value: Tensor<F>) -> Self {
        Self {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                value,
                needs_grad: false,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    pub(crate) fn from_op(value: Tensor<F>, parents: Vec<Var<F>>, backward: BackwardFn<F>) -> Self {
        let needs_grad = parents.iter().any(|p| p.needs_grad());
        if !needs_grad {
            // Drop history: inference through the same ops keeps no graph.
            return Self::constant(value);
        }
        Self {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                value,
                needs_grad,
                parents,
                backward: Some(backward),
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.node.value
    }

    pub fn shape(&self) -> &[usize] {
        self.node.value.shape()
    }

    pub fn needs_grad(&self) -> bool {
        self.node.needs_grad
    }

    fn parents(&self) -> &[Var<F>] {
        &self.node.parents
    }
}

/// Gradients keyed by leaf id, as produced by [`backward`].
#[derive(Debug)]
pub struct GradStore<F: Scalar> {
    map: HashMap<u64, Tensor<F>>,
}

impl<F: Scalar> GradStore<F> {
    pub fn get(&self, id: u64) -> Option<&Tensor<F>> {
        self.map.get(&id)
    }

    pub fn take(&mut self, id: u64) -> Option<Tensor<F>> {
        self.map.remove(&id)
    }
}

/// Reverse-mode sweep from a scalar loss. Returns gradients for every
/// gradient-requiring leaf reachable from `loss`.
pub fn backward<F: Scalar>(loss: &Var<F>) -> Result<GradStore<F>> {
    if loss.value().len() != 1 {
        return Err(Error::NonScalarLoss {
            len: loss.value().len(),
        });
    }

    // Collect the gradient-carrying subgraph. Node ids increase from parents
    // to children, so descending id order is a valid reverse topological
    // order.
    let mut visited: HashSet<u64> = HashSet::new();
    let mut order: Vec<Var<F>> = Vec::new();
    let mut stack = vec![loss.clone()];
    while let Some(v) = stack.pop() {
        if !v.needs_grad() || !visited.insert(v.id()) {
            continue;
        }
        for p in v.parents() {
            stack.push(p.clone());
        }
        order.push(v);
    }
    order.sort_by_key(|v| std::cmp::Reverse(v.id()));

    let mut grads: HashMap<u64, Tensor<F>> = HashMap::new();
    grads.insert(loss.id(), Tensor::full(loss.value().shape(), F::one()));

    for v in &order {
        let Some(back) = v.node.backward.as_ref() else {
            continue; // leaf: its accumulated gradient stays in the store
        };
        // All children have larger ids and were already processed, so the
        // gradient for this node is complete; remove it to free memory.
        let Some(g) = grads.remove(&v.id()) else {
            continue;
        };
        let parent_grads = back(&g, v.parents());
        debug_assert_eq!(parent_grads.len(), v.parents().len());
        for (p, pg) in v.parents().iter().zip(parent_grads) {
            let Some(pg) = pg else { continue };
            if !p.needs_grad() {
                continue;
            }
            debug_assert_eq!(pg.shape(), p.shape(), "gradient shape mismatch");
            match grads.get_mut(&p.id()) {
                Some(acc) => acc.add_assign(&pg),
                None => {
                    grads.insert(p.id(), pg);
                }
            }
        }
    }

    Ok(GradStore { map: grads })
}

#[cfg(test)]
mod tests {
    use super::ops;
    use super::*;

    #[test]
    fn linear_case_grad_is_input() {
        // loss = sum(w .* x) with x fixed -> grad(w) = x
        let w = Var::leaf(Tensor::from_vec(vec![1.0f64, -2.0, 0.5]));
        let x = Var::constant(Tensor::from_vec(vec![3.0f64, 4.0, 5.0]));
        let loss = ops::sum(&ops::mul(&w, &x));
        let grads = backward(&loss).unwrap();
        assert_eq!(grads.get(w.id()).unwrap().data(), &[3.0, 4.0, 5.0]);
        assert!(grads.get(x.id()).is_none(), "constants carry no gradient");
    }

    #[test]
    fn squared_norm_grad() {
        // loss = ||w||^2 at w = [3, 4] -> grad = [6, 8]
        let w = Var::leaf(Tensor::from_vec(vec![3.0f64, 4.0]));
        let loss = ops::sum(&ops::mul(&w, &w));
        let grads = backward(&loss).unwrap();
        assert_eq!(grads.get(w.id()).unwrap().data(), &[6.0, 8.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let w = Var::leaf(Tensor::from_vec(vec![1.0f64, 2.0]));
        let err = backward(&w).unwrap_err();
        assert!(matches!(err, Error::NonScalarLoss { len: 2 }));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(w*w + w*w) -> grad = 4w
        let w = Var::leaf(Tensor::from_vec(vec![1.5f64]));
        let sq = ops::mul(&w, &w);
        let loss = ops::sum(&ops::add(&sq, &sq));
        let grads = backward(&loss).unwrap();
        assert_eq!(grads.get(w.id()).unwrap().data(), &[6.0]);
    }
}
