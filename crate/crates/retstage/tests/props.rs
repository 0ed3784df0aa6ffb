//! Property tests: randomized invariants with independent oracles.

use proptest::prelude::*;

use retstage::data::{class_weights, downsample_balanced, kfold, split_train_test, EmbeddingFile};
use retstage::deferral::contrastive_loss;
use retstage::metrics::auroc_ovr;
use retstage::nn::{weighted_cross_entropy, PlateauScheduler};
use retstage::perturb::{color_jitter, gaussian_blur, rotate, Image};
use retstage::tensor::Tensor;

/// Brute-force pair enumeration of the contrastive objective, kept separate
/// from the implementation it checks.
fn contrastive_oracle(points: &[Vec<f64>], labels: &[u8], margin: f64) -> f64 {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(&points[i], &points[j]);
            if labels[i] == labels[j] {
                pos.push(d);
            } else {
                neg.push(d);
            }
        }
    }
    let pos_term = if pos.is_empty() {
        0.0
    } else {
        pos.iter().sum::<f64>() / pos.len() as f64
    };
    let neg_term = if neg.is_empty() {
        0.0
    } else {
        neg.iter().map(|d| (margin - d).max(0.0)).sum::<f64>() / neg.len() as f64
    };
    pos_term + neg_term
}

/// O(n^2) pair-counting AUROC oracle with half-credit ties.
fn auroc_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    let mut credit = 0.0;
    for &p in pos {
        for &q in neg {
            credit += match p.partial_cmp(&q).unwrap() {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    credit / (pos.len() * neg.len()) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contrastive_matches_bruteforce_oracle(
        n in 2usize..16,
        dim in 1usize..6,
        seed in any::<u64>(),
        margin in 0.1f64..4.0,
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let flat: Vec<f64> = points.iter().flatten().cloned().collect();
        let proj = Tensor::new(vec![n, dim], flat).unwrap();
        let (loss, _) = contrastive_loss(&proj, &labels, margin).unwrap();
        let expect = contrastive_oracle(&points, &labels, margin);
        prop_assert!((loss - expect).abs() < 1e-12, "{loss} vs {expect}");
    }

    #[test]
    fn auroc_matches_pair_counting_with_ties(
        n_pos in 1usize..40,
        n_neg in 1usize..40,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        // quantized scores force plenty of ties
        let pos: Vec<f64> = (0..n_pos).map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0).collect();
        let neg: Vec<f64> = (0..n_neg).map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0).collect();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for &p in &pos { scores.push(vec![p]); labels.push(0u8); }
        for &q in &neg { scores.push(vec![q]); labels.push(1u8); }
        let flat: Vec<f64> = scores.iter().flatten().cloned().collect();
        let tensor = Tensor::new(vec![labels.len(), 1], flat).unwrap();
        let got = auroc_ovr(&tensor, &labels).unwrap().per_class[0].unwrap();
        let expect = auroc_oracle(&pos, &neg);
        prop_assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn auroc_invariant_under_monotone_transform(
        n in 4usize..50,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let base = Tensor::new(vec![n, 1], scores.clone()).unwrap();
        // strictly monotone: x -> exp(2x) + x^3
        let mapped: Vec<f64> = scores.iter().map(|&x| (2.0 * x).exp() + x * x * x).collect();
        let transformed = Tensor::new(vec![n, 1], mapped).unwrap();
        let a = auroc_ovr(&base, &labels).unwrap().per_class[0];
        let b = auroc_ovr(&transformed, &labels).unwrap().per_class[0];
        prop_assert_eq!(a.map(|v| (v * 1e12).round()), b.map(|v| (v * 1e12).round()));
    }

    #[test]
    fn class_weight_identity_holds(counts in prop::collection::vec(1usize..500, 2..8)) {
        let w = class_weights(&counts).unwrap();
        let total: f64 = w.data().iter().zip(&counts).map(|(wc, &n)| wc * n as f64).sum();
        let n_total: usize = counts.iter().sum();
        prop_assert!((total - n_total as f64).abs() < 1e-6 * n_total as f64);
    }

    #[test]
    fn scheduler_lr_never_increases(losses in prop::collection::vec(0.0f64..10.0, 1..60)) {
        let mut s = PlateauScheduler::new(0.05);
        let mut prev = s.lr();
        for loss in losses {
            let lr = s.observe(loss);
            prop_assert!(lr <= prev + 1e-18);
            prop_assert!(lr >= s.min_lr);
            prev = lr;
        }
    }

    #[test]
    fn uniform_weights_equal_unweighted_exactly(
        n in 1usize..8,
        k in 2usize..6,
        seed in any::<u64>(),
        scale in 0.5f64..20.0,
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let data: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let logits = Tensor::new(vec![n, k], data).unwrap();
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let unit = Tensor::filled(vec![k], 1.0);
        let scaled = Tensor::filled(vec![k], scale);
        let (a, ga) = weighted_cross_entropy(&logits, &targets, &unit).unwrap();
        let (b, gb) = weighted_cross_entropy(&logits, &targets, &scaled).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert_eq!(ga.data(), gb.data());
    }

    #[test]
    fn embedding_file_round_trip_is_bitexact(
        rows in 1usize..12,
        cols in 1usize..40,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let ids: Vec<String> = (0..rows).map(|i| format!("id{i:03}")).collect();
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-1e6f32..1e6)).collect();
        let file = EmbeddingFile::new(cols, ids, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        file.write(&path).unwrap();
        let back = EmbeddingFile::read(&path).unwrap();
        prop_assert_eq!(file, back);
    }

    #[test]
    fn splits_and_folds_are_pure_functions_of_seed(
        n in 10usize..120,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = (0..n).map(|i| (i % 5) as u8).collect();
        let a = kfold(&labels, 5, seed).unwrap();
        let b = kfold(&labels, 5, seed).unwrap();
        prop_assert_eq!(&a, &b);
        // partition: each index appears in exactly one validation fold
        let mut seen = vec![0usize; n];
        for (_, val) in &a {
            for &i in val {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        // fold sizes differ by at most one
        let sizes: Vec<usize> = a.iter().map(|(_, v)| v.len()).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);

        let d1 = downsample_balanced(&labels, 2, seed).unwrap();
        let d2 = downsample_balanced(&labels, 2, seed).unwrap();
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn blur_commutes_with_constant_offset(
        offset in -0.3f64..0.3,
        sigma in 0.2f64..2.0,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let img = Image::from_fn(9, 7, |_, _, _| rng.gen_range(0.0..0.5)).unwrap();
        let mut shifted = img.clone();
        shifted.data_mut().iter_mut().for_each(|v| *v += offset);
        let a = gaussian_blur(&shifted, 5, sigma).unwrap();
        let mut b = gaussian_blur(&img, 5, sigma).unwrap();
        b.data_mut().iter_mut().for_each(|v| *v += offset);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn perturbations_preserve_dimensions_and_range(
        angle in -180.0f64..180.0,
        b in 0.8f64..1.2,
        c in 0.8f64..1.2,
        s in 0.8f64..1.2,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = retstage::rng::seeded(seed);
        let img = Image::from_fn(11, 13, |_, _, _| rng.gen_range(0.0..1.0)).unwrap();
        let rotated = rotate(&img, angle).unwrap();
        prop_assert_eq!((rotated.width, rotated.height), (11, 13));
        let jittered = color_jitter(&rotated, b, c, s);
        prop_assert_eq!((jittered.width, jittered.height), (11, 13));
        for &v in jittered.data() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn split_is_deterministic_and_disjoint() {
    use retstage::data::{clean, Split, TabularRecord};
    let records: Vec<TabularRecord> = (0..57)
        .map(|i| TabularRecord {
            patient_id: format!("p{i}"),
            features: vec![Some(i as f64); 17],
            dr_stage: Some((i % 5) as u8),
        })
        .collect();
    let mut a = clean(&records).unwrap();
    let mut b = clean(&records).unwrap();
    split_train_test(&mut a, 0.8, 99).unwrap();
    split_train_test(&mut b, 0.8, 99).unwrap();
    let tags = |d: &retstage::data::Dataset| -> Vec<Option<Split>> {
        d.records.iter().map(|r| r.split).collect()
    };
    assert_eq!(tags(&a), tags(&b));
    let train = a.records.iter().filter(|r| r.split == Some(Split::Train)).count();
    assert_eq!(train, 57 - (0.2f64 * 57.0).ceil() as usize);
}
