//! Minimal layer library with explicit forward/backward contracts.
//!
//! Layers cache whatever the backward pass needs during `forward`, accumulate
//! parameter gradients on `backward`, and hand input gradients back to the
//! caller. There is no autodiff graph; composition order is the caller's job.

mod act;
mod adam;
mod gradcheck;
mod linear;
mod loss;
mod norm;
mod sched;

pub use act::{Relu, Sigmoid};
pub use adam::AdamState;
pub use gradcheck::{max_rel_error_input, max_rel_error_params, proj_loss, GradCheck};
pub use linear::LinearLayer;
pub use loss::{binary_cross_entropy, weighted_cross_entropy};
pub use norm::{BatchNorm1d, LayerNorm, NormMode};
pub use sched::PlateauScheduler;

use crate::tensor::Tensor;

/// One trainable tensor paired with its gradient accumulator.
pub struct ParamSlot<'a> {
    pub name: String,
    pub value: &'a mut Tensor,
    pub grad: &'a mut Tensor,
}

/// Anything that exposes its trainable parameters.
///
/// Slot order must be stable across calls: the optimizer and the checkpoint
/// container both key moments/tensors by position and name.
pub trait HasParams {
    fn param_slots(&mut self) -> Vec<ParamSlot<'_>>;

    /// Non-trainable state that still belongs in a checkpoint
    /// (batch-norm running statistics).
    fn state_slots(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }

    fn zero_grads(&mut self) {
        for slot in self.param_slots() {
            slot.grad.fill(0.0);
        }
    }
}

/// Prefix every slot name, for nesting submodules.
pub fn prefixed<'a>(prefix: &str, slots: Vec<ParamSlot<'a>>) -> Vec<ParamSlot<'a>> {
    slots
        .into_iter()
        .map(|s| ParamSlot {
            name: format!("{prefix}.{}", s.name),
            value: s.value,
            grad: s.grad,
        })
        .collect()
}
