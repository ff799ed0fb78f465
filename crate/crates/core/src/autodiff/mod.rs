//! Reverse-mode differentiation, parameter storage, Adam and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use tape::{EdgeList, Gradients, Tape, Var, BCE_EPS};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
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

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces every tensor with the same-named entry from `other`,
    /// requiring identical names and shapes.
    pub fn assign_from(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                self.len(),
                other.len()
            )));
        }
        for (name, t) in other {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unexpected parameter `{name}`")))?;
            if self.tensors[i].shape() != t.shape() {
                return Err(Error::shape(
                    "assign_from",
                    format!("`{name}` is {:?}, got {:?}", self.tensors[i].shape(), t.shape()),
                ));
            }
            self.tensors[i] = t.clone();
        }
        Ok(())
    }
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let denom = (fan_in + fan_out).max(1) as f64;
    let a = (6.0 / denom).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}
