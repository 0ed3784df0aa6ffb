//! Training loops: unimodal tabular baseline and fusion with k-fold CV.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{class_weights, kfold, Dataset, Split};
use crate:: error::{Error, Result};
use crate::fusion::{FusionModel, Strategy, TabularNet, NUM_STAGES};
use crate::metrics::{evaluate, softmax_rows, MetricsReport};
use crate::nn::{weighted_cross_entropy, AdamState, HasParams};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TabularTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TabularTrainConfig {
    fn default() -> Self {
        TabularTrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionTrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        FusionTrainConfig {
            strategy: Strategy::Concat,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            k_folds: 5,
            seed: 0,
        }
    }
}

fn gather_rows(x: &Tensor, idx: &[usize]) -> Tensor {
    let cols = x.cols();
    let mut data = Vec::with_capacity(idx.len() * cols);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), cols], data).expect("gather shapes agree")
}

fn gather_labels(labels: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn stage_counts(labels: &[u8]) -> [usize; NUM_STAGES] {
    let mut counts = [0usize; NUM_STAGES];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// Result of training the tabular baseline.
pub struct TabularOutcome {
    pub model: TabularNet,
    pub train_metrics: MetricsReport,
    pub test_metrics: MetricsReport,
    pub epoch_loss: Vec<f64>,
}

/// Train the 17-feature baseline on the train split with inverse-frequency
/// weighted cross entropy; evaluate on both splits.
pub fn train_tabular(dataset: &Dataset, cfg: &TabularTrainConfig) -> Result<TabularOutcome> {
    if dataset.scaler.is_none() {
        return Err(Error::data("dataset must be standardized before training"));
    }
    // canonical order by sample id so metrics do not depend on row order
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| dataset.records[a].sample_id.cmp(&dataset.records[b].sample_id));

    let split_of = |want: Split| -> (Tensor, Vec<u8>) {
        let rows: Vec<&crate::data::Record> = order
            .iter()
            .map(|&i| &dataset.records[i])
            .filter(|r| r.split == Some(want))
            .collect();
        let mut data = Vec::with_capacity(rows.len() * 17);
        let mut labels = Vec::with_capacity(rows.len());
        for r in &rows {
            data.extend_from_slice(&r.features);
            labels.push(r.dr_stage);
        }
        (
            Tensor::new(vec![rows.len(), 17], data).expect("17 features per record"),
            labels,
        )
    };
    let (x_train, y_train) = split_of(Split::Train);
    let (x_test, y_test) = split_of(Split::Test);
    if y_train.is_empty() || y_test.is_empty() {
        return Err(Error::data("both train and test splits must be non-empty"));
    }

    let weights = class_weights(&stage_counts(&y_train))?;
    let mut model = TabularNet::new(rng::derive_seed(cfg.seed, "tabular-model"));
    let mut adam = AdamState::for_slots(cfg.lr, &model.param_slots());
    let mut epoch_rng = rng::stream(cfg.seed, "tabular-epochs");

    let n = y_train.len();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut idx: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut idx, &mut epoch_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let xb = gather_rows(&x_train, chunk);
            let yb = gather_labels(&y_train, chunk);
            let yb_usize: Vec<usize> = yb.iter().map(|&v| v as usize).collect();
            model.zero_grads();
            let logits = model.forward(&xb)?;
            let (loss, d_logits) = weighted_cross_entropy(&logits, &yb_usize, &weights)?;
            model.backward(&d_logits)?;
            adam.step(&mut model.param_slots())?;
            total += loss;
            batches += 1;
        }
        epoch_loss.push(total / batches as f64);
    }

    let train_metrics = evaluate(&softmax_rows(&model.forward(&x_train)?), &y_train)?;
    let test_metrics = evaluate(&softmax_rows(&model.forward(&x_test)?), &y_test)?;
    Ok(TabularOutcome {
        model,
        train_metrics,
        test_metrics,
        epoch_loss,
    })
}

/// One aligned batch of multimodal samples.
#[derive(Debug, Clone)]
pub struct FusionBatch {
    pub ids: Vec<String>,
    /// `[n x 512]` frozen image embeddings.
    pub img: Tensor,
    /// `[n x 4]` standardized selected features.
    pub tab: Tensor,
    pub labels: Vec<u8>,
}

impl FusionBatch {
    pub fn new(ids: Vec<String>, img: Tensor, tab: Tensor, labels: Vec<u8>) -> Result<Self> {
        let n = ids.len();
        if img.rows() != n || tab.rows() != n || labels.len() != n {
            return Err(Error::dim(format!(
                "fusion batch misaligned: {n} ids, {} img rows, {} tab rows, {} labels",
                img.rows(),
                tab.rows(),
                labels.len()
            )));
        }
        Ok(FusionBatch {
            ids,
            img,
            tab,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> FusionBatch {
        FusionBatch {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            img: gather_rows(&self.img, idx),
            tab: gather_rows(&self.tab, idx),
            labels: gather_labels(&self.labels, idx),
        }
    }

    /// Reorder by ascending sample id.
    fn canonical(&self) -> FusionBatch {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        self.subset(&order)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub train: MetricsReport,
    pub val: MetricsReport,
}

pub struct FusionCvOutcome {
    pub strategy: Strategy,
    pub folds: Vec<FoldMetrics>,
    pub final_model: FusionModel,
    pub heldout_metrics: MetricsReport,
}

impl FusionCvOutcome {
    pub fn mean_fold_train_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.train.accuracy).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_fold_val_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.val.accuracy).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_fold_train_auroc(&self) -> Option<f64> {
        let vals: Vec<f64> = self.folds.iter().filter_map(|f| f.train.auroc_macro).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn mean_fold_val_auroc(&self) -> Option<f64> {
        let vals: Vec<f64> = self.folds.iter().filter_map(|f| f.val.auroc_macro).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn train_fusion_model(
    strategy: Strategy,
    data: &FusionBatch,
    cfg: &FusionTrainConfig,
    stream_label: &str,
) -> Result<FusionModel> {
    let weights = class_weights(&stage_counts(&data.labels))?;
    let mut model = FusionModel::new(strategy, rng::derive_seed(cfg.seed, stream_label));
    let mut adam = AdamState::for_slots(cfg.lr, &model.param_slots());
    let mut epoch_rng = rng::stream(cfg.seed, &format!("{stream_label}/epochs"));
    let n = data.len();
    for _ in 0..cfg.epochs {
        let mut idx: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut idx, &mut epoch_rng);
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let batch = data.subset(chunk);
            let targets: Vec<usize> = batch.labels.iter().map(|&v| v as usize).collect();
            model.zero_grads();
            let logits = model.forward(&batch.img, &batch.tab)?;
            let (_, d_logits) = weighted_cross_entropy(&logits, &targets, &weights)?;
            model.backward(&d_logits)?;
            adam.step(&mut model.param_slots())?;
        }
    }
    Ok(model)
}

pub fn evaluate_fusion(model: &mut FusionModel, data: &FusionBatch) -> Result<MetricsReport> {
    let logits = model.forward(&data.img, &data.tab)?;
    evaluate(&softmax_rows(&logits), &data.labels)
}

/// Stratified k-fold cross-validation, then a final model trained on the
/// whole CV set and evaluated on the held-out batch. Folds run in parallel;
/// each owns its model and RNG stream, so results do not depend on thread
/// count or on the input row order.
pub fn train_fusion_cv(
    cv: &FusionBatch,
    heldout: &FusionBatch,
    cfg: &FusionTrainConfig,
) -> Result<FusionCvOutcome> {
    if cv.is_empty() || heldout.is_empty() {
        return Err(Error::data("cv and held-out sets must be non-empty"));
    }
    let cv = cv.canonical();
    let folds = kfold(&cv.labels, cfg.k_folds, cfg.seed)?;

    let fold_metrics: Result<Vec<FoldMetrics>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train_idx, val_idx))| {
            let train_set = cv.subset(train_idx);
            let val_set = cv.subset(val_idx);
            let mut model =
                train_fusion_model(cfg.strategy, &train_set, cfg, &format!("fold{f}"))?;
            Ok(FoldMetrics {
                train: evaluate_fusion(&mut model, &train_set)?,
                val: evaluate_fusion(&mut model, &val_set)?,
            })
        })
        .collect();
    let folds = fold_metrics?;

    let mut final_model = train_fusion_model(cfg.strategy, &cv, cfg, "final")?;
    let heldout_metrics = evaluate_fusion(&mut final_model, heldout)?;

    Ok(FusionCvOutcome {
        strategy: cfg.strategy,
        folds,
        final_model,
        heldout_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::rng::{next_gaussian, stream};

    fn synthetic_fusion_batch(n_per_class: usize, seed: u64) -> FusionBatch {
        let out = synth_generate(&SynthConfig {
            n_per_class,
            seed,
            image_side: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        let img = out.embeddings.to_tensor();
        let n = out.records.len();
        let mut rng = stream(seed, "tab-noise");
        let mut tab = Vec::with_capacity(n * 4);
        let mut labels = Vec::with_capacity(n);
        for rec in &out.records {
            let stage = rec.dr_stage.unwrap();
            // standardized-looking class-correlated scalars
            for f in 0..4 {
                tab.push(f64::from(stage) * 0.8 + 0.3 * next_gaussian(&mut rng) + f as f64 * 0.1);
            }
            labels.push(stage);
        }
        FusionBatch::new(
            out.embeddings.ids().to_vec(),
            img,
            Tensor::new(vec![n, 4], tab).unwrap(),
            labels,
        )
        .unwrap()
    }

    #[test]
    fn fold_sizes_match_protocol() {
        let cv = synthetic_fusion_batch(82, 3);
        let heldout = synthetic_fusion_batch(4, 4);
        let cfg = FusionTrainConfig {
            epochs: 1,
            seed: 5,
            ..FusionTrainConfig::default()
        };
        let outcome = train_fusion_cv(&cv, &heldout, &cfg).unwrap();
        assert_eq!(outcome.folds.len(), 5);
        for fold in &outcome.folds {
            assert_eq!(fold.train.n, 328);
            assert_eq!(fold.val.n, 82);
        }
        assert_eq!(outcome.heldout_metrics.n, 20);
    }

    #[test]
    fn separable_data_trains_to_high_accuracy_quickly() {
        let cv = synthetic_fusion_batch(20, 7);
        let heldout = synthetic_fusion_batch(6, 8);
        let cfg = FusionTrainConfig {
            strategy: Strategy::Concat,
            epochs: 10,
            seed: 9,
            ..FusionTrainConfig::default()
        };
        let outcome = train_fusion_cv(&cv, &heldout, &cfg).unwrap();
        assert!(
            outcome.mean_fold_val_accuracy() >= 0.9,
            "fold val acc {}",
            outcome.mean_fold_val_accuracy()
        );
        assert!(outcome.heldout_metrics.accuracy >= 0.9);
    }

    #[test]
    fn cv_is_order_invariant_and_deterministic() {
        let cv = synthetic_fusion_batch(10, 11);
        let heldout = synthetic_fusion_batch(3, 12);
        let cfg = FusionTrainConfig {
            epochs: 2,
            seed: 13,
            ..FusionTrainConfig::default()
        };
        let a = train_fusion_cv(&cv, &heldout, &cfg).unwrap();
        // reverse presentation order
        let order: Vec<usize> = (0..cv.len()).rev().collect();
        let reversed = cv.subset(&order);
        let b = train_fusion_cv(&reversed, &heldout, &cfg).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.val.accuracy, fb.val.accuracy);
            assert_eq!(fa.val.confusion, fb.val.confusion);
        }
        assert_eq!(a.heldout_metrics, b.heldout_metrics);
    }

    #[test]
    fn tabular_baseline_beats_chance_on_correlated_features() {
        let out = synth_generate(&SynthConfig {
            n_per_class: 60,
            seed: 21,
            image_side: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut dataset = crate::data::clean(&out.records).unwrap();
        crate::data::split_train_test(&mut dataset, 0.8, 21).unwrap();
        crate::data::standardize_fit_transform(&mut dataset).unwrap();
        let outcome = train_tabular(&dataset, &TabularTrainConfig { seed: 2, ..Default::default() }).unwrap();
        assert!(
            outcome.test_metrics.accuracy > 0.2,
            "test acc {}",
            outcome.test_metrics.accuracy
        );
        assert_eq!(outcome.epoch_loss.len(), 20);
    }

    #[test]
    fn tabular_training_is_deterministic() {
        let out = synth_generate(&SynthConfig {
            n_per_class: 10,
            seed: 22,
            image_side: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut dataset = crate::data::clean(&out.records).unwrap();
        crate::data::split_train_test(&mut dataset, 0.8, 22).unwrap();
        crate::data::standardize_fit_transform(&mut dataset).unwrap();
        let cfg = TabularTrainConfig { epochs: 3, seed: 4, ..Default::default() };
        let a = train_tabular(&dataset, &cfg).unwrap();
        let b = train_tabular(&dataset, &cfg).unwrap();
        assert_eq!(a.epoch_loss, b.epoch_loss);
        assert_eq!(a.test_metrics, b.test_metrics);
    }

    #[test]
    fn identical_features_plateau_loss() {
        // no signal: all features equal; loss stays near its initial value
        let mut dataset = crate::data::clean(
            &(0..40)
                .map(|i| crate::data::TabularRecord {
                    patient_id: format!("p{i}"),
                    features: vec![Some(1.0); 17],
                    dr_stage: Some((i % 5) as u8),
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        crate::data::split_train_test(&mut dataset, 0.8, 1).unwrap();
        crate::data::standardize_fit_transform(&mut dataset).unwrap();
        let outcome = train_tabular(
            &dataset,
            &TabularTrainConfig { epochs: 8, seed: 1, ..Default::default() },
        )
        .unwrap();
        let first = outcome.epoch_loss[0];
        let last = *outcome.epoch_loss.last().unwrap();
        assert!((first - last).abs() < 0.3, "no-signal loss moved {first} -> {last}");
    }
}
