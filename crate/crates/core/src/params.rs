//! Named parameter sets and their gradients.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{GradStore, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Param<F: Scalar> {
    pub tensor: Tensor<F>,
    pub requires_grad: bool,
}

/// Collection of uniquely named parameters. Iteration order is deterministic
/// (sorted by name).
#[derive(Clone, Debug, Default)]
pub struct ParameterSet<F: Scalar> {
    entries: BTreeMap<String, Param<F>>,
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<F>, requires_grad: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(
            name.to_string(),
            Param {
                tensor,
                requires_grad,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param<F>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<F>> {
        self.entries.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> &Tensor<F> {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
            .tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<F>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.tensor.len()).sum()
    }

    /// Create graph leaves for every parameter. With `trainable`, entries
    /// marked `requires_grad` become differentiable leaves; otherwise every
    /// entry is bound as a constant (a frozen network).
    pub fn bind(&self, trainable: bool) -> Bound<F> {
        let mut vars = BTreeMap::new();
        for (name, p) in &self.entries {
            let var = if trainable && p.requires_grad {
                Var::leaf(p.tensor.clone())
            } else {
                Var::constant(p.tensor.clone())
            };
            vars.insert(name.clone(), var);
        }
        Bound { vars }
    }

    /// Elementwise maximum absolute difference against another set with the
    /// same names and shapes.
    pub fn max_abs_diff(&self, other: &ParameterSet<F>) -> f64 {
        let mut worst = 0.0f64;
        for (name, p) in &self.entries {
            let q = other.tensor(name);
            for (a, b) in p.tensor.data().iter().zip(q.data().iter()) {
                worst = worst.max((a.into_f64() - b.into_f64()).abs());
            }
        }
        worst
    }
}

/// Parameters bound into a graph for one forward/backward pass.
pub struct Bound<F: Scalar> {
    vars: BTreeMap<String, Var<F>>,
}

impl<F: Scalar> Bound<F> {
    pub fn var(&self, name: &str) -> &Var<F> {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("unknown bound parameter `{name}`"))
    }

    /// Assemble a [`GradientMap`] covering exactly the `requires_grad`
    /// entries of `params`; entries untouched by the graph get zero
    /// gradients.
    pub fn gradients(&self, params: &ParameterSet<F>, store: &mut GradStore<F>) -> GradientMap<F> {
        let mut map = BTreeMap::new();
        for (name, p) in params.iter() {
            if !p.requires_grad {
                continue;
            }
            let var = self.var(name);
            let grad = store
                .take(var.id())
                .unwrap_or_else(|| Tensor::zeros(p.tensor.shape()));
            map.insert(name.clone(), grad);
        }
        GradientMap { map }
    }
}

/// Gradients keyed by parameter name; shapes mirror the parameter set.
#[derive(Clone, Debug, Default)]
pub struct GradientMap<F: Scalar> {
    map: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> GradientMap<F> {
    pub fn from_map(map: BTreeMap<String, Tensor<F>>) -> Self {
        Self { map }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Accumulate another gradient map (same keys and shapes).
    pub fn add_assign(&mut self, other: &GradientMap<F>) {
        for (name, g) in &other.map {
            match self.map.get_mut(name) {
                Some(acc) => acc.add_assign(g),
                None => {
                    self.map.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale_assign(&mut self, c: F) {
        for g in self.map.values_mut() {
            g.scale_assign(c);
        }
    }

    /// Global L2 norm over all entries (accumulated in f64).
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for g in self.map.values() {
            for v in g.data() {
                let x = v.into_f64();
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    /// Scale all gradients so the global norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = F::from_f64(max_norm / norm);
            self.scale_assign(s);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{backward, ops};

    #[test]
    fn names_unique_and_sorted() {
        let mut ps = ParameterSet::<f32>::new();
        ps.insert("b", Tensor::from_vec(vec![1.0]), true).unwrap();
        ps.insert("a", Tensor::from_vec(vec![2.0]), true).unwrap();
        assert!(ps.insert("a", Tensor::from_vec(vec![3.0]), true).is_err());
        let names: Vec<_> = ps.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(names, vec!["a", "b"]);
    }

    #[test]
    fn gradients_cover_requires_grad_exactly() {
        let mut ps = ParameterSet::<f64>::new();
        ps.insert("w", Tensor::from_vec(vec![2.0, 3.0]), true).unwrap();
        ps.insert("frozen", Tensor::from_vec(vec![1.0]), false).unwrap();
        ps.insert("unused", Tensor::from_vec(vec![5.0]), true).unwrap();

        let bound = ps.bind(true);
        let loss = ops::sum(&ops::square(bound.var("w")));
        let mut store = backward(&loss).unwrap();
        let grads = bound.gradients(&ps, &mut store);

        assert_eq!(grads.len(), 2);
        assert_eq!(grads.get("w").unwrap().data(), &[4.0, 6.0]);
        assert_eq!(grads.get("unused").unwrap().data(), &[0.0]);
        assert!(grads.get("frozen").is_none());
    }

    #[test]
    fn clip_reduces_norm() {
        let mut gm = GradientMap::<f64>::default();
        gm.map.insert("a".into(), Tensor::from_vec(vec![3.0, 4.0]));
        let pre = gm.clip_global_norm(1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        assert!((gm.global_norm() - 1.0).abs() < 1e-12);
    }
}
