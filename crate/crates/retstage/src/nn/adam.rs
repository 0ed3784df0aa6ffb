use crate::error::{Error, Result};
use crate::nn::ParamSlot;
use crate::tensor::Tensor;

/// Adam with bias correction. Moment buffers are positional: the slot list
/// passed to `step` must always come from the same model in the same order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[Vec<usize>]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
        }
    }

    pub fn for_slots(lr: f64, slots: &[ParamSlot<'_>]) -> Self {
        let shapes: Vec<Vec<usize>> = slots.iter().map(|s| s.value.shape().to_vec()).collect();
        AdamState::new(lr, &shapes)
    }

    /// One update: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    pub fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        if slots.len() != self.m.len() {
            return Err(Error::dim(format!(
                "adam: {} slots vs {} moment buffers",
                slots.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, slot) in slots.iter_mut().enumerate() {
            if slot.value.shape() != self.m[idx].shape() {
                return Err(Error::dim(format!(
                    "adam: slot {} shape {:?} vs state {:?}",
                    slot.name,
                    slot.value.shape(),
                    self.m[idx].shape()
                )));
            }
            if slot.grad.shape() != slot.value.shape() {
                return Err(Error::dim(format!(
                    "adam: grad shape mismatch on {}",
                    slot.name
                )));
            }
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let g = slot.grad.data();
            let theta = slot.value.data_mut();
            for k in 0..theta.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                theta[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
