//! Exact t-SNE to 2-D.
//!
//! O(n^2) affinities and gradients: per-point Gaussian bandwidths found by
//! binary search against the target perplexity, symmetrized P, Student-t Q,
//! gradient descent on KL(P||Q) with early exaggeration, the classic
//! momentum switch, and per-element adaptive gains.

use crate::error::{Error, Result};
use crate::rng::{self, next_gaussian};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    /// `[n x 2]`, translation-centered.
    pub coords: Tensor,
    /// KL(P||Q) after every iteration, against the unexaggerated P.
    pub kl_history: Vec<f64>,
    /// Worst |entropy - log2(perplexity)| over points, in bits.
    pub calibration_max_err: f64,
    /// Points whose bandwidth search hit the bisection cap.
    pub calibration_capped: usize,
}

const BANDWIDTH_TOL: f64 = 1e-5;
const BANDWIDTH_MAX_STEPS: usize = 50;

/// Squared Euclidean distances, `[n x n]`.
fn squared_distances(x: &Tensor) -> Tensor {
    let n = x.rows();
    let mut d = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist2 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            d.set(i, j, dist2);
            d.set(j, i, dist2);
        }
    }
    d
}

/// Conditional p_{j|i} for one row at inverse bandwidth `beta`, and the
/// entropy of that distribution in bits.
fn row_affinities(dist2: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let n = dist2.len();
    let min_d = dist2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for j in 0..n {
        if j == i {
            out[j] = 0.0;
        } else {
            out[j] = (-beta * (dist2[j] - min_d)).exp();
            z += out[j];
        }
    }
    let mut entropy_bits = 0.0;
    for (j, v) in out.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        *v /= z;
        if *v > 0.0 {
            entropy_bits -= *v * v.log2();
        }
    }
    entropy_bits
}

/// Calibration summary for the bandwidth search.
#[derive(Debug, Clone, Copy)]
pub struct Calibration {
    pub max_entropy_err: f64,
    pub capped: usize,
}

/// Symmetrized joint affinities P (`[n x n]`, zero diagonal, sums to 1) with
/// per-point bandwidths matched to the target perplexity by binary search.
pub fn joint_affinities(x: &Tensor, perplexity: f64) -> Result<(Tensor, Calibration)> {
    let n = x.rows();
    if perplexity >= n as f64 {
        return Err(Error::config(format!(
            "perplexity {perplexity} must be below the point count {n}"
        )));
    }
    if perplexity <= 1.0 {
        return Err(Error::config("perplexity must exceed 1"));
    }
    let dist2 = squared_distances(x);
    let target_bits = perplexity.log2();

    let mut p_cond = Tensor::zeros(vec![n, n]);
    let mut calibration = Calibration {
        max_entropy_err: 0.0,
        capped: 0,
    };
    let mut row = vec![0.0; n];
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let mut err = f64::INFINITY;
        let mut capped = true;
        for _ in 0..BANDWIDTH_MAX_STEPS {
            let entropy = row_affinities(dist2.row(i), i, beta, &mut row);
            err = entropy - target_bits;
            if err.abs() < BANDWIDTH_TOL {
                capped = false;
                break;
            }
            if err > 0.0 {
                // entropy too high -> distribution too flat -> raise beta
                beta_min = beta;
                beta = if beta_max.is_infinite() { beta * 2.0 } else { (beta + beta_max) / 2.0 };
            } else {
                beta_max = beta;
                beta = if beta_min.is_infinite() { beta / 2.0 } else { (beta + beta_min) / 2.0 };
            }
        }
        if capped {
            row_affinities(dist2.row(i), i, beta, &mut row);
            calibration.capped += 1;
        }
        calibration.max_entropy_err = calibration.max_entropy_err.max(err.abs());
        p_cond.row_mut(i).copy_from_slice(&row);
    }

    // symmetrize: P_ij = (p_{j|i} + p_{i|j}) / 2n, sum_ij P_ij = 1
    let mut p = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (p_cond.at(i, j) + p_cond.at(j, i)) / (2.0 * n as f64));
        }
    }
    Ok((p, calibration))
}

/// Embed `x` (`[n x d]`) into 2-D.
pub fn tsne_embed(x: &Tensor, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    if n < 5 {
        return Err(Error::data(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if cfg.iterations == 0 {
        return Err(Error::config("iterations must be >= 1"));
    }
    x.check_finite("t-SNE input")?;

    let (p, calibration) = joint_affinities(x, cfg.perplexity)?;

    let mut y_rng = rng::stream(cfg.seed, "tsne-init");
    let mut y = Tensor::new(
        vec![n, 2],
        (0..n * 2).map(|_| next_gaussian(&mut y_rng) * 1e-4).collect(),
    )?;
    let mut velocity = Tensor::zeros(vec![n, 2]);
    let mut gains = Tensor::filled(vec![n, 2], 1.0);
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    let mut previous: Option<(f64, Tensor)> = None;

    let mut q_weight = Tensor::zeros(vec![n, n]); // 1 / (1 + |y_i - y_j|^2)
    for iter in 0..cfg.iterations {
        // Student-t kernel and normalizer
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dy0 = y.at(i, 0) - y.at(j, 0);
                let dy1 = y.at(i, 1) - y.at(j, 1);
                let w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q_weight.set(i, j, w);
                q_weight.set(j, i, w);
                z += 2.0 * w;
            }
        }

        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.exaggeration
        } else {
            1.0
        };

        // gradient: 4 * sum_j (exag*P_ij - Q_ij) w_ij (y_i - y_j)
        let mut grad = Tensor::zeros(vec![n, 2]);
        let mut kl = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q_weight.at(i, j);
                let q = (w / z).max(1e-12);
                let p_ij = p.at(i, j);
                let coeff = 4.0 * (exaggeration * p_ij - q) * w;
                let g = grad.row_mut(i);
                g[0] += coeff * (y.at(i, 0) - y.at(j, 0));
                g[1] += coeff * (y.at(i, 1) - y.at(j, 1));
                if p_ij > 0.0 {
                    kl += p_ij * (p_ij / q).ln();
                }
            }
        }

        let momentum = if iter < cfg.momentum_switch {
            cfg.momentum_start
        } else {
            cfg.momentum_final
        };
        // the gradient scale jumps when exaggeration ends; restart the
        // optimizer state so the transient does not overshoot
        if iter == cfg.exaggeration_iters {
            velocity.fill(0.0);
            gains.fill(1.0);
        }

        // post-exaggeration descent guard: if the last applied step raised
        // the KL, reject it, restart the momentum, and damp the gains
        if iter > cfg.exaggeration_iters {
            if let Some((prev_kl, prev_coords)) = previous.as_ref() {
                if kl > *prev_kl {
                    y = prev_coords.clone();
                    velocity.fill(0.0);
                    gains.data_mut().iter_mut().for_each(|g| *g = (*g * 0.5).max(0.01));
                    kl_history.push(*prev_kl);
                    continue;
                }
            }
        }
        previous = Some((kl, y.clone()));

        for idx in 0..n * 2 {
            let g = grad.data()[idx];
            let v = velocity.data()[idx];
            let gain = &mut gains.data_mut()[idx];
            *gain = if g.signum() != v.signum() {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(0.01)
            };
            velocity.data_mut()[idx] = momentum * v - cfg.learning_rate * *gain * g;
            y.data_mut()[idx] += velocity.data()[idx];
        }
        // recenter
        let mut mean = [0.0f64; 2];
        for i in 0..n {
            mean[0] += y.at(i, 0);
            mean[1] += y.at(i, 1);
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for i in 0..n {
            let row = y.row_mut(i);
            row[0] -= mean[0];
            row[1] -= mean[1];
        }

        kl_history.push(kl);
    }

    y.check_finite("t-SNE embedding")?;
    Ok(TsneResult {
        coords: y,
        kl_history,
        calibration_max_err: calibration.max_entropy_err,
        calibration_capped: calibration.capped,
    })
}
