use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Numerically stable log-softmax of one row.
fn log_softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = v - log_z;
    }
}

/// Class-weighted cross entropy with weighted-mean reduction.
///
/// L = sum_i w_{y_i} * (-log softmax(logits)_i[y_i]) / sum_i w_{y_i}
///
/// Returns the loss and its gradient with respect to the logits.
pub fn weighted_cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    weights: &Tensor,
) -> Result<(f64, Tensor)> {
    let n = logits.rows();
    let k = logits.cols();
    if targets.len() != n {
        return Err(Error::dim(format!(
            "cross entropy: {n} rows of logits vs {} targets",
            targets.len()
        )));
    }
    if weights.len() != k {
        return Err(Error::dim(format!(
            "cross entropy: {k} classes vs {} weights",
            weights.len()
        )));
    }
    if weights.data().iter().any(|&w| w <= 0.0) {
        return Err(Error::config("class weights must be strictly positive"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::data(format!("target {t} out of range for {k} classes")));
    }

    // The weighted mean is invariant to rescaling the weight vector. Scale by
    // the max so uniform weights become exactly 1.0 and the result is
    // bit-identical to the unweighted loss.
    let w_max = weights.data().iter().cloned().fold(f64::MIN, f64::max);
    let scaled: Vec<f64> = weights.data().iter().map(|w| w / w_max).collect();

    let weight_sum: f64 = targets.iter().map(|&t| scaled[t]).sum();
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(vec![n, k]);
    let mut log_p = vec![0.0; k];
    for i in 0..n {
        log_softmax_row(logits.row(i), &mut log_p);
        let w = scaled[targets[i]];
        loss += w * (-log_p[targets[i]]);
        let gi = grad.row_mut(i);
        for j in 0..k {
            let p = log_p[j].exp();
            let indicator = if j == targets[i] { 1.0 } else { 0.0 };
            gi[j] = w * (p - indicator) / weight_sum;
        }
    }
    Ok((loss / weight_sum, grad))
}

const BCE_CLAMP: f64 = 1e-7;

/// Binary cross entropy over probabilities, mean reduction.
///
/// Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs; the
/// gradient is taken through the clamped value.
pub fn binary_cross_entropy(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() {
        return Err(Error::dim(format!(
            "bce: {} probabilities vs {} labels",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::data("bce: empty batch"));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for (i, (&pi, &yi)) in p.iter().zip(y).enumerate() {
        let pc = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss += -(yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln());
        grad[i] = (-yi / pc + (1.0 - yi) / (1.0 - pc)) / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::matrix(&[vec![0.3; 5], vec![0.3; 5]]).unwrap();
        let weights = Tensor::vector(&[0.2605, 3.5912, 1.7197, 11.9122, 4.6075]);
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 3], &weights).unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn confident_correct_logit_drives_loss_to_zero() {
        let logits = Tensor::matrix(&[vec![50.0, 0.0]]).unwrap();
        let weights = Tensor::vector(&[1.0, 1.0]);
        let (loss, _) = weighted_cross_entropy(&logits, &[0], &weights).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn hand_softmax_two_samples() {
        // Per-sample CE = ln(1 + e^-1) for both; weighted mean is the same value.
        let logits = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let weights = Tensor::vector(&[1.0, 3.0]);
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 1], &weights).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-12);
        assert!((expect - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let logits = Tensor::matrix(&[vec![0.2, -1.0, 0.4], vec![1.5, 0.1, -0.3]]).unwrap();
        let targets = [2usize, 0];
        let w1 = Tensor::vector(&[1.0, 1.0, 1.0]);
        let w7 = Tensor::vector(&[7.0, 7.0, 7.0]);
        let (a, ga) = weighted_cross_entropy(&logits, &targets, &w1).unwrap();
        let (b, gb) = weighted_cross_entropy(&logits, &targets, &w7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga.data(), gb.data());
    }

    #[test]
    fn nonpositive_weight_is_config_error() {
        let logits = Tensor::matrix(&[vec![0.0, 0.0]]).unwrap();
        let weights = Tensor::vector(&[1.0, 0.0]);
        assert!(weighted_cross_entropy(&logits, &[0], &weights).is_err());
    }

    #[test]
    fn bce_half_is_ln2() {
        let (loss, _) = binary_cross_entropy(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let (loss, _) = binary_cross_entropy(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn bce_hand_value() {
        let (loss, _) = binary_cross_entropy(&[0.8], &[0.0]).unwrap();
        assert!((loss - (-0.2f64.ln())).abs() < 1e-12);
        assert!((loss - 1.6094).abs() < 1e-4);
    }
}
