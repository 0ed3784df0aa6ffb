//! Single-head scaled dot-product attention with explicit backward.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Everything the backward pass needs from one attention application.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Softmax rows, `[m x n]`.
    pub weights: Tensor,
}

/// softmax(Q K^T / sqrt(d)) V for Q `[m x d]`, K,V `[n x d]`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, AttentionCache)> {
    let d = q.cols();
    if k.cols() != d {
        return Err(Error::dim(format!(
            "attention: q has dim {d}, k has {}",
            k.cols()
        )));
    }
    if k.rows() != v.rows() {
        return Err(Error::dim(format!(
            "attention: {} keys vs {} values",
            k.rows(),
            v.rows()
        )));
    }
    let m = q.rows();
    let n = k.rows();
    let scale = 1.0 / (d as f64).sqrt();

    let mut weights = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let qi = q.row(i);
        let wi = weights.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            let kj = k.row(j);
            let score = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            wi[j] = score;
            max = max.max(score);
        }
        let mut z = 0.0;
        for w in wi.iter_mut() {
            *w = (*w - max).exp();
            z += *w;
        }
        for w in wi.iter_mut() {
            *w /= z;
        }
    }

    let dv = v.cols();
    let mut out = Tensor::zeros(vec![m, dv]);
    for i in 0..m {
        let wi = weights.row(i);
        let oi = out.row_mut(i);
        for (j, &w) in wi.iter().enumerate() {
            let vj = v.row(j);
            for t in 0..dv {
                oi[t] += w * vj[t];
            }
        }
    }

    let cache = AttentionCache {
        q: q.clone(),
        k: k.clone(),
        v: v.clone(),
        weights,
    };
    Ok((out, cache))
}

/// Gradients of the attention output with respect to Q, K, V.
pub fn attention_backward(cache: &AttentionCache, d_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let m = cache.q.rows();
    let n = cache.k.rows();
    let d = cache.q.cols();
    let dv = cache.v.cols();
    if d_out.rows() != m || d_out.cols() != dv {
        return Err(Error::dim("attention backward: d_out shape mismatch"));
    }
    let scale = 1.0 / (d as f64).sqrt();

    let mut dq = Tensor::zeros(vec![m, d]);
    let mut dk = Tensor::zeros(vec![n, d]);
    let mut dval = Tensor::zeros(vec![n, dv]);

    // dV = W^T dOut
    for i in 0..m {
        let wi = cache.weights.row(i);
        let doi = d_out.row(i);
        for (j, &w) in wi.iter().enumerate() {
            let dvj = dval.row_mut(j);
            for t in 0..dv {
                dvj[t] += w * doi[t];
            }
        }
    }

    // dW, then softmax backward to scores, then into Q and K.
    for i in 0..m {
        let wi = cache.weights.row(i);
        let doi = d_out.row(i);
        let mut dw = vec![0.0; n];
        for (j, dwj) in dw.iter_mut().enumerate() {
            let vj = cache.v.row(j);
            *dwj = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
        }
        let dot: f64 = dw.iter().zip(wi).map(|(a, b)| a * b).sum();
        // ds_j = w_j * (dw_j - sum_j' dw_j' w_j'), scaled into the scores
        for j in 0..n {
            let ds = wi[j] * (dw[j] - dot) * scale;
            if ds == 0.0 {
                continue;
            }
            let kj = cache.k.row(j);
            let qi = cache.q.row(i);
            let dqi = dq.row_mut(i);
            for t in 0..d {
                dqi[t] += ds * kj[t];
            }
            let dkj = dk.row_mut(j);
            for t in 0..d {
                dkj[t] += ds * qi[t];
            }
        }
    }

    Ok((dq, dk, dval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::max_rel_error_input;
    use crate::rng::{next_gaussian, stream};

    fn random(shape: Vec<usize>, rng: &mut impl rand::Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| next_gaussian(rng)).collect()).unwrap()
    }

    #[test]
    fn single_key_broadcasts_value() {
        let mut rng = stream(1, "attn");
        let q = random(vec![3, 8], &mut rng);
        let k = random(vec![1, 8], &mut rng);
        let v = random(vec![1, 8], &mut rng);
        let (out, cache) = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            assert_eq!(out.row(i), v.row(0));
            assert!((cache.weights.at(i, 0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_values_collapse_regardless_of_weights() {
        let mut rng = stream(2, "attn");
        let q = random(vec![2, 6], &mut rng);
        let k = random(vec![4, 6], &mut rng);
        let row: Vec<f64> = (0..6).map(|_| next_gaussian(&mut rng)).collect();
        let mut v = Tensor::zeros(vec![4, 6]);
        for j in 0..4 {
            v.row_mut(j).copy_from_slice(&row);
        }
        let (out, _) = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..2 {
            for (a, e) in out.row(i).iter().zip(&row) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hand_softmax_quarter_three_quarters() {
        // Scores (0, ln 3) give softmax weights (0.25, 0.75).
        let d = 512usize;
        let scale = (d as f64).sqrt();
        let mut q = Tensor::zeros(vec![1, d]);
        q.set(0, 0, scale); // undoes the 1/sqrt(d)
        let mut k = Tensor::zeros(vec![2, d]);
        k.set(1, 0, 3.0f64.ln());
        let mut v = Tensor::zeros(vec![2, d]);
        v.set(0, 0, 1.0);
        v.set(1, 1, 1.0);
        let (out, cache) = scaled_dot_attention(&q, &k, &v).unwrap();
        assert!((cache.weights.at(0, 0) - 0.25).abs() < 1e-12);
        assert!((cache.weights.at(0, 1) - 0.75).abs() < 1e-12);
        assert!((out.at(0, 0) - 0.25).abs() < 1e-12);
        assert!((out.at(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one_and_output_in_convex_hull() {
        let mut rng = stream(3, "attn");
        let q = random(vec![5, 7], &mut rng);
        let k = random(vec![6, 7], &mut rng);
        let v = random(vec![6, 7], &mut rng);
        let (out, cache) = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..5 {
            let s: f64 = cache.weights.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for t in 0..7 {
                let column: Vec<f64> = (0..6).map(|j| v.at(j, t)).collect();
                let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(out.at(i, t) >= lo - 1e-12 && out.at(i, t) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(4, "attn");
        let q0 = random(vec![2, 5], &mut rng);
        let k0 = random(vec![3, 5], &mut rng);
        let v0 = random(vec![3, 5], &mut rng);
        let r = random(vec![2, 5], &mut rng);
        let (_, cache) = scaled_dot_attention(&q0, &k0, &v0).unwrap();
        let (dq, dk, dv) = attention_backward(&cache, &r).unwrap();
        let loss = |q: &Tensor, k: &Tensor, v: &Tensor| {
            let (out, _) = scaled_dot_attention(q, k, v).unwrap();
            out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut q = q0.clone();
        let err_q = max_rel_error_input(&mut q, &dq, |q| loss(q, &k0, &v0), 1e-5);
        let mut k = k0.clone();
        let err_k = max_rel_error_input(&mut k, &dk, |k| loss(&q0, k, &v0), 1e-5);
        let mut v = v0.clone();
        let err_v = max_rel_error_input(&mut v, &dv, |v| loss(&q0, &k0, v), 1e-5);
        assert!(err_q < 1e-4, "dq err {err_q}");
        assert!(err_k < 1e-4, "dk err {err_k}");
        assert!(err_v < 1e-4, "dv err {err_v}");
    }
}
