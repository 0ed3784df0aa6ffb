//! Deterministic splits, balanced downsampling, and stratified k-fold.

use std::collections::BTreeMap;

use crate::data::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Tag every record train/test: seeded shuffle, then the last
/// ceil((1-ratio)*n) samples become the test split.
pub fn split_train_test(dataset: &mut Dataset, ratio: f64, seed: u64) -> Result<()> {
    let n = dataset.len();
    if n < 5 {
        return Err(Error::data(format!(
            "split needs at least 5 samples, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(Error::config(format!("bad split ratio {ratio}")));
    }
    let test_n = ((1.0 - ratio) * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed, "split");
    rng::shuffle(&mut order, &mut rng);
    for (pos, &idx) in order.iter().enumerate() {
        dataset.records[idx].split = Some(if pos < n - test_n {
            Split::Train
        } else {
            Split::Test
        });
    }
    Ok(())
}

/// Uniformly sample `per_class` indices per class, without replacement.
/// Returns ascending indices into `labels`.
pub fn downsample_balanced(labels: &[u8], per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = rng::stream(seed, "downsample");
    let mut picked = Vec::new();
    for (class, mut members) in by_class {
        if members.len() < per_class {
            return Err(Error::data(format!(
                "class {class} has {} samples, need {per_class}",
                members.len()
            )));
        }
        rng::shuffle(&mut members, &mut rng);
        picked.extend_from_slice(&members[..per_class]);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Stratified k-fold. Each class's indices are shuffled and dealt round-robin
/// into validation folds with a pointer that carries across classes, so fold
/// sizes differ by at most one both per class and overall.
pub fn kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::config(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::data(format!("{n} samples cannot fill {k} folds")));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = rng::stream(seed, "kfold");
    let mut val_folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut pointer = 0usize;
    for (_, mut members) in by_class {
        rng::shuffle(&mut members, &mut rng);
        for idx in members {
            val_folds[pointer % k].push(idx);
            pointer += 1;
        }
    }
    let mut out = Vec::with_capacity(k);
    for fold in &mut val_folds {
        fold.sort_unstable();
    }
    for f in 0..k {
        let val = val_folds[f].clone();
        let mut train = Vec::with_capacity(n - val.len());
        for (g, fold) in val_folds.iter().enumerate() {
            if g != f {
                train.extend_from_slice(fold);
            }
        }
        train.sort_unstable();
        out.push((train, val));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::{Record, FEATURE_NAMES, NUM_FEATURES};

    fn dataset_of(n: usize) -> Dataset {
        Dataset {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            records: (0..n)
                .map(|i| Record {
                    sample_id: format!("s{i:05}"),
                    patient_id: format!("p{}", i / 4),
                    features: vec![0.0; NUM_FEATURES],
                    dr_stage: (i % 5) as u8,
                    split: None,
                })
                .collect(),
            scaler: None,
        }
    }

    fn split_sizes(ds: &Dataset) -> (usize, usize) {
        let train = ds
            .records
            .iter()
            .filter(|r| r.split == Some(Split::Train))
            .count();
        (train, ds.len() - train)
    }

    #[test]
    fn eighty_twenty_on_ten() {
        let mut ds = dataset_of(10);
        split_train_test(&mut ds, 0.8, 1).unwrap();
        assert_eq!(split_sizes(&ds), (8, 2));
    }

    #[test]
    fn split_sizes_match_ceil_convention() {
        let mut ds = dataset_of(4884);
        split_train_test(&mut ds, 0.8, 1).unwrap();
        assert_eq!(split_sizes(&ds), (3907, 977));
    }

    #[test]
    fn split_is_deterministic() {
        let mut a = dataset_of(50);
        let mut b = dataset_of(50);
        split_train_test(&mut a, 0.8, 9).unwrap();
        split_train_test(&mut b, 0.8, 9).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.split, rb.split);
        }
    }

    #[test]
    fn split_too_small_errors() {
        let mut ds = dataset_of(4);
        assert!(split_train_test(&mut ds, 0.8, 1).is_err());
    }

    #[test]
    fn downsample_shapes_and_determinism() {
        let labels: Vec<u8> = (0..500).map(|i| (i % 5) as u8).collect();
        let a = downsample_balanced(&labels, 82, 3).unwrap();
        let b = downsample_balanced(&labels, 82, 3).unwrap();
        assert_eq!(a.len(), 410);
        assert_eq!(a, b);
        for c in 0..5u8 {
            assert_eq!(a.iter().filter(|&&i| labels[i] == c).count(), 82);
        }
    }

    #[test]
    fn downsample_full_class_when_exact() {
        let labels: Vec<u8> = vec![0, 0, 0, 1, 1, 1, 1];
        let picked = downsample_balanced(&labels, 3, 1).unwrap();
        // class 0 has exactly 3 members; all of them must be included
        assert!(picked.contains(&0) && picked.contains(&1) && picked.contains(&2));
    }

    #[test]
    fn downsample_insufficient_class_names_it() {
        let labels: Vec<u8> = vec![0, 0, 1];
        let err = downsample_balanced(&labels, 2, 1).unwrap_err().to_string();
        assert!(err.contains("class 1"), "{err}");
    }

    #[test]
    fn kfold_410_gives_balanced_folds() {
        let labels: Vec<u8> = (0..410).map(|i| (i / 82) as u8).collect();
        let folds = kfold(&labels, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0usize; 410];
        for (train, val) in &folds {
            assert_eq!(val.len(), 82);
            assert_eq!(train.len(), 328);
            for &i in val {
                seen[i] += 1;
            }
            // stratification: 16 or 17 per class in each val fold
            for c in 0..5u8 {
                let count = val.iter().filter(|&&i| labels[i] == c).count();
                assert!(count == 16 || count == 17, "class {c}: {count}");
            }
        }
        assert!(seen.iter().all(|&s| s == 1), "each index in exactly one val fold");
    }

    #[test]
    fn kfold_requires_enough_samples() {
        assert!(kfold(&[0, 1, 2], 5, 1).is_err());
    }
}
