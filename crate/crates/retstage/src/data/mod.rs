//! Tabular ingestion, cleaning, standardization, splits, class weighting,
//! embedding file I/O, and the synthetic dataset generator.

mod dataset;
mod embed;
mod split;
mod synth;

pub use dataset::{
    clean, feature_index, read_csv, selected_indices, standardize_fit_transform, write_csv,
    Dataset, Record, Scaler, Split, TabularRecord, FEATURE_NAMES, NUM_FEATURES, SELECTED_FEATURES,
};
pub use embed::{EmbeddingFile, EMBED_MAGIC, EMBED_VERSION, FUSED_EMBED_DIM, IMAGE_EMBED_DIM};
pub use split::{downsample_balanced, kfold, split_train_test};
pub use synth::{synth_generate, SynthConfig, SynthOutput, NUM_CLASSES};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inverse-frequency class weights: w_c = N / (K * n_c).
pub fn class_weights(counts: &[usize]) -> Result<Tensor> {
    if counts.is_empty() {
        return Err(Error::config("class_weights: empty counts"));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::config(format!("class {c} has zero samples")));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    let weights: Vec<f64> = counts
        .iter()
        .map(|&n| total as f64 / (k * n as f64))
        .collect();
    Ok(Tensor::vector(&weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_published_weight_vector() {
        let w = class_weights(&[3750, 272, 568, 82, 212]).unwrap();
        let expect = [0.2605, 3.5912, 1.7197, 11.9122, 4.6075];
        for (a, e) in w.data().iter().zip(expect) {
            assert!((a - e).abs() < 5e-4, "{a} vs {e}");
        }
    }

    #[test]
    fn balanced_counts_give_unit_weights() {
        let w = class_weights(&[10, 10, 10, 10]).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_class_hand_example() {
        let w = class_weights(&[1, 3]).unwrap();
        assert_eq!(w.data()[0], 2.0);
        assert!((w.data()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_counts_sum_to_total() {
        let counts = [37, 5, 12, 80, 3];
        let w = class_weights(&counts).unwrap();
        let total: f64 = w
            .data()
            .iter()
            .zip(counts)
            .map(|(wc, n)| wc * n as f64)
            .sum();
        assert!((total - 137.0).abs() < 1e-9);
    }

    #[test]
    fn zero_count_is_config_error() {
        assert!(class_weights(&[5, 0, 2]).is_err());
    }
}
