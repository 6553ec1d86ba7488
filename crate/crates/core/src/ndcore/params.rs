use alloc::string::String;
use alloc::vec::Vec;

use super::{Gradients, Graph, Real, Tensor, Var};

/// Named, ordered set of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Graph handles for every tensor of a [`ParamStore`], in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, index: usize) -> &Tensor<T> {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor<T> {
        &mut self.tensors[index]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Adds every tensor to `g`, as trainable leaves or as constants.
    pub fn attach(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    /// Gradients in store order; exact zeros for unreachable tensors.
    pub fn gradients(&self, bound: &Bound, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| grads.get_or_zeros(v, t.rows(), t.cols()))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces the tensor values from `other`, which must have identical
    /// names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> crate::Result<()> {
        if self.names != other.names {
            return Err(crate::Error::Invalid(
                "parameter names differ from the stored layout".into(),
            ));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(crate::Error::ShapeMismatch {
                    op: "load_from",
                    left: dst.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            *dst = src.clone();
        }
        Ok(())
    }
}
