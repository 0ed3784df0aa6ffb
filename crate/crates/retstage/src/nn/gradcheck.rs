//! Central finite-difference verification of analytic gradients.
//!
//! The checks here are the harness every layer and loss in this crate is held
//! to: perturb one scalar at a time, compare (f(x+h) - f(x-h)) / 2h against
//! the analytic gradient, report the worst relative error.

use rand::Rng;

use crate::nn::HasParams;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub h: f64,
    /// Cap on elements checked per tensor; `None` checks every element.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            max_per_tensor: None,
            seed: 0,
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn pick_indices(len: usize, cap: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
    match cap {
        Some(c) if c < len => {
            let mut chosen = std::collections::BTreeSet::new();
            while chosen.len() < c {
                chosen.insert(rng.gen_range(0..len));
            }
            chosen.into_iter().collect()
        }
        _ => (0..len).collect(),
    }
}

/// Max relative error between analytic parameter gradients and central
/// differences of the loss. `loss_and_grad` must zero grads, run forward and
/// backward, and return the loss; `loss_only` must run a fresh forward.
pub fn max_rel_error_params<M: HasParams>(
    model: &mut M,
    mut loss_and_grad: impl FnMut(&mut M) -> f64,
    mut loss_only: impl FnMut(&mut M) -> f64,
    cfg: &GradCheck,
) -> f64 {
    loss_and_grad(model);
    let analytic: Vec<Vec<f64>> = model
        .param_slots()
        .iter()
        .map(|s| s.grad.data().to_vec())
        .collect();
    let lens: Vec<usize> = analytic.iter().map(Vec::len).collect();

    let mut pick_rng = rng::stream(cfg.seed, "gradcheck");
    let mut worst = 0.0f64;
    for (slot_idx, len) in lens.iter().enumerate() {
        for k in pick_indices(*len, cfg.max_per_tensor, &mut pick_rng) {
            let orig = model.param_slots()[slot_idx].value.data()[k];
            model.param_slots()[slot_idx].value.data_mut()[k] = orig + cfg.h;
            let up = loss_only(model);
            model.param_slots()[slot_idx].value.data_mut()[k] = orig - cfg.h;
            let down = loss_only(model);
            model.param_slots()[slot_idx].value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * cfg.h);
            worst = worst.max(rel_err(analytic[slot_idx][k], numeric));
        }
    }
    worst
}

/// Max relative error between an analytic input gradient and central
/// differences of the loss with respect to the input tensor.
pub fn max_rel_error_input(
    x: &mut Tensor,
    analytic_dx: &Tensor,
    mut loss_only: impl FnMut(&Tensor) -> f64,
    h: f64,
) -> f64 {
    assert_eq!(x.shape(), analytic_dx.shape(), "dx shape mismatch");
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + h;
        let up = loss_only(x);
        x.data_mut()[k] = orig - h;
        let down = loss_only(x);
        x.data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(analytic_dx.data()[k], numeric));
    }
    worst
}

/// Scalar reduction used by the checks: loss = sum(y * r), dloss/dy = r.
pub fn proj_loss(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}
