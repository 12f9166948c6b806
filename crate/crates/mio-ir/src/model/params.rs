//! Ordered, named parameter collection shared by the restoration model and
//! the classifier.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{Graph, NodeId, Tensor};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.numel()).collect()
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Insert every parameter as a graph leaf, in declaration order.
    pub fn bind(&self, g: &mut Graph) -> Vec<NodeId> {
        self.tensors.iter().map(|t| g.leaf(t.clone())).collect()
    }

    /// Collect gradients for bound leaves; parameters that did not reach the
    /// loss get zero gradients.
    pub fn grads(&self, all_grads: &[Option<Tensor>], nodes: &[NodeId]) -> Result<Vec<Tensor>> {
        if nodes.len() != self.tensors.len() {
            return Err(Error::shape("bound node count does not match parameter count"));
        }
        Ok(nodes
            .iter()
            .zip(&self.tensors)
            .map(|(&id, t)| {
                all_grads
                    .get(id)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// He-style normal init: std = sqrt(2 / fan_in).
pub fn conv_init(rng: &mut ChaCha8Rng, out_c: usize, in_c: usize, k: usize) -> Tensor {
    let fan_in = (in_c * k * k) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
    let data = (0..out_c * in_c * k * k).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![out_c, in_c, k, k], data).expect("sized")
}

pub fn dense_init(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).expect("positive std");
    let data = (0..out_dim * in_dim).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![out_dim, in_dim], data).expect("sized")
}

pub fn init_rng(stream: &RngStream, label: &str) -> ChaCha8Rng {
    stream.derive(label).rng()
}
