use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub(crate) name: String,
    pub(crate) value: Tensor,
    pub(crate) grad: Tensor,
    pub(crate) first_moment: Tensor,
    pub(crate) second_moment: Tensor,
}

/// Named trainable tensors, their gradient accumulators and optimizer state.
///
/// Parameters keep insertion order; that order is also the serialization
/// order of checkpoints, so two stores built by the same code hash equally.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub(crate) slots: Vec<Slot>,
    index: BTreeMap<String, usize>,
    pub(crate) adam_steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        if !value.all_finite() {
            return Err(Error::NonFinite("parameter init"));
        }
        let shape = value.shape().to_vec();
        let id = self.slots.len();
        self.index.insert(name.clone(), id);
        self.slots.push(Slot {
            name,
            grad: Tensor::zeros(&shape),
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            value,
        });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].grad
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let slot = &mut self.slots[id.0];
        if slot.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: slot.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        slot.value = value;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for slot in &mut self.slots {
            slot.grad.fill(0.0);
        }
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }
}
