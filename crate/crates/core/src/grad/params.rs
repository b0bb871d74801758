//! Named parameter collection with a stable registration order.

use std::collections::HashMap;

use crate::scalar::Scalar;

use super::tensor::Tensor;
use super::GradError;

/// All trainable tensors of a model, keyed by name. Registration order is
/// fixed by the code path that builds the set, so gradient slots, optimizer
/// state and checkpoints all align by index. The version counter increases
/// by one on every applied optimizer update.
#[derive(Debug, Clone)]
pub struct ParamSet<S: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
    version: u64,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
            version: 0,
        }
    }

    pub fn register(&mut self, name: &str, tensor: Tensor<S>) -> Result<usize, GradError> {
        if self.index.contains_key(name) {
            return Err(GradError::DuplicateParam {
                name: name.to_string(),
            });
        }
        let slot = self.tensors.len();
        self.index.insert(name.to_string(), slot);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.slot(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.index.get(name).copied().map(|i| &mut self.tensors[i])
    }

    pub fn tensor(&self, slot: usize) -> &Tensor<S> {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor<S> {
        &mut self.tensors[slot]
    }

    /// Tensors in registration order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.tensors.iter()
    }

    /// (name, tensor) pairs in registration order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names
            .iter()
            .map(|n| n.as_str())
            .zip(self.tensors.iter())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub(crate) fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    /// Total scalar count across all registered tensors.
    pub fn count_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Convert every tensor to a different scalar type (used by checkpoint
    /// serialization, which stores f32).
    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (name, t) in self.entries() {
            out.register(name, t.cast::<T>()).expect("unique names");
        }
        out.version = self.version;
        out
    }
}
