//! Quality-based deferral: contrastive projection network, combined
//! contrastive + BCE objective, and the threshold decision.
//!
//! The projection network maps 1024-d fused embeddings into a 64-d space
//! where good-quality and adversarial samples separate; a sigmoid head on the
//! same projections scores quality. Pairwise terms operate on Euclidean
//! distances between the post-batch-norm projections.

use crate::data::FUSED_EMBED_DIM;
use crate::error::{Error, Result};
use crate::nn::{
    binary_cross_entropy, prefixed, AdamState, BatchNorm1d, HasParams, LinearLayer, NormMode,
    ParamSlot, PlateauScheduler, Relu, Sigmoid,
};
use crate::rng;
use crate::tensor::Tensor;

pub const PROJECTION_DIM: usize = 64;
pub const HIDDEN_DIM: usize = 128;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Pairwise Euclidean distances, `[n x n]`, zero diagonal.
pub fn pairwise_distances(proj: &Tensor) -> Tensor {
    let n = proj.rows();
    let mut d = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = proj
                .row(i)
                .iter()
                .zip(proj.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    d
}

/// The pairwise loss on a distance matrix:
///
/// L = sum_P d_ij / |P|  +  sum_N max(0, margin - d_ij) / |N|
///
/// over unordered pairs i<j; P = same label, N = different label. An empty
/// pair class contributes 0. Also returns dL/dd over the upper triangle
/// (mirrored for convenience).
pub fn contrastive_terms(
    distances: &Tensor,
    labels: &[u8],
    margin: f64,
) -> Result<(f64, Tensor)> {
    let n = labels.len();
    if distances.rows() != n || distances.cols() != n {
        return Err(Error::dim(format!(
            "distance matrix {}x{} vs {n} labels",
            distances.rows(),
            distances.cols()
        )));
    }
    if n < 2 {
        return Err(Error::data("contrastive loss needs at least 2 samples"));
    }
    let mut pos_count = 0usize;
    let mut neg_count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                pos_count += 1;
            } else {
                neg_count += 1;
            }
        }
    }
    let mut loss = 0.0;
    let mut d_dist = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distances.at(i, j);
            if labels[i] == labels[j] {
                loss += d / pos_count as f64;
                let g = 1.0 / pos_count as f64;
                d_dist.set(i, j, g);
                d_dist.set(j, i, g);
            } else if d < margin {
                loss += (margin - d) / neg_count as f64;
                let g = -1.0 / neg_count as f64;
                d_dist.set(i, j, g);
                d_dist.set(j, i, g);
            }
        }
    }
    Ok((loss, d_dist))
}

/// Pairwise contrastive loss on projection points; returns the loss and its
/// gradient with respect to the projections. Coincident points contribute a
/// zero (sub)gradient.
pub fn contrastive_loss(proj: &Tensor, labels: &[u8], margin: f64) -> Result<(f64, Tensor)> {
    let n = proj.rows();
    if labels.len() != n {
        return Err(Error::dim(format!(
            "{n} projections vs {} labels",
            labels.len()
        )));
    }
    let distances = pairwise_distances(proj);
    let (loss, d_dist) = contrastive_terms(&distances, labels, margin)?;
    let dim = proj.cols();
    let mut d_proj = Tensor::zeros(vec![n, dim]);
    for i in 0..n {
        for j in (i + 1)..n {
            let g = d_dist.at(i, j);
            if g == 0.0 {
                continue;
            }
            let d = distances.at(i, j);
            if d == 0.0 {
                continue;
            }
            for t in 0..dim {
                let unit = (proj.at(i, t) - proj.at(j, t)) / d;
                d_proj.data_mut()[i * dim + t] += g * unit;
                d_proj.data_mut()[j * dim + t] -= g * unit;
            }
        }
    }
    Ok((loss, d_proj))
}

/// Projection network (1024 -> 128 -> 64 -> batch norm) plus sigmoid head.
pub struct ContrastiveNet {
    pub l1: LinearLayer,
    relu: Relu,
    pub l2: LinearLayer,
    pub bn: BatchNorm1d,
    pub head: LinearLayer,
    sigmoid: Sigmoid,
}

impl ContrastiveNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng::stream(seed, "contrastive-init");
        ContrastiveNet {
            l1: LinearLayer::new(FUSED_EMBED_DIM, HIDDEN_DIM, &mut rng),
            relu: Relu::new(),
            l2: LinearLayer::new(HIDDEN_DIM, PROJECTION_DIM, &mut rng),
            bn: BatchNorm1d::new(PROJECTION_DIM),
            head: LinearLayer::new(PROJECTION_DIM, 1, &mut rng),
            sigmoid: Sigmoid::new(),
        }
    }

    /// Post-batch-norm 64-d projections.
    pub fn project(&mut self, x: &Tensor, mode: NormMode) -> Result<Tensor> {
        let h = self.l1.forward(x)?;
        let a = self.relu.forward(&h);
        let p = self.l2.forward(&a)?;
        self.bn.forward(&p, mode)
    }

    /// Quality scores in (0,1) for a batch of projections.
    pub fn score(&mut self, proj: &Tensor) -> Result<Vec<f64>> {
        let logits = self.head.forward(proj)?;
        Ok(self.sigmoid.forward(&logits).data().to_vec())
    }

    /// Backward from a projection-space gradient plus a score gradient
    /// (dL/dscore, one per sample).
    pub fn backward(&mut self, d_proj: &Tensor, d_scores: &[f64]) -> Result<()> {
        let n = d_proj.rows();
        if d_scores.len() != n {
            return Err(Error::dim("deferral backward: score gradient length"));
        }
        let d_sig = self
            .sigmoid
            .backward(&Tensor::new(vec![n, 1], d_scores.to_vec())?)?;
        let d_from_head = self.head.backward(&d_sig)?;
        let mut d_total = d_proj.clone();
        for (a, b) in d_total.data_mut().iter_mut().zip(d_from_head.data()) {
            *a += b;
        }
        let dp = self.bn.backward(&d_total)?;
        let da = self.l2.backward(&dp)?;
        let dh = self.relu.backward(&da)?;
        self.l1.backward(&dh)?;
        Ok(())
    }
}

impl HasParams for ContrastiveNet {
    fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = prefixed("l1", self.l1.param_slots());
        slots.extend(prefixed("l2", self.l2.param_slots()));
        slots.extend(prefixed("bn", self.bn.param_slots()));
        slots.extend(prefixed("head", self.head.param_slots()));
        slots
    }

    fn state_slots(&mut self) -> Vec<(String, &mut Tensor)> {
        self.bn
            .state_slots()
            .into_iter()
            .map(|(name, t)| (format!("bn.{name}"), t))
            .collect()
    }

    fn zero_grads(&mut self) {
        self.l1.zero_grads();
        self.l2.zero_grads();
        self.bn.zero_grads();
        self.head.zero_grads();
    }
}

/// Combined objective on one batch: contrastive(projections) + mean BCE of
/// the head scores, weighted `contrastive_weight : bce_weight`.
pub fn deferral_objective(
    net: &mut ContrastiveNet,
    x: &Tensor,
    labels: &[u8],
    cfg: &DeferralConfig,
    mode: NormMode,
) -> Result<ObjectiveValue> {
    let proj = net.project(x, mode)?;
    let scores = net.score(&proj)?;
    let (c_loss, d_proj) = contrastive_loss(&proj, labels, cfg.margin)?;
    let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let (b_loss, d_scores) = binary_cross_entropy(&scores, &targets)?;
    Ok(ObjectiveValue {
        total: cfg.contrastive_weight * c_loss + cfg.bce_weight * b_loss,
        contrastive: c_loss,
        bce: b_loss,
        scores,
        d_proj,
        d_scores,
    })
}

pub struct ObjectiveValue {
    pub total: f64,
    pub contrastive: f64,
    pub bce: f64,
    pub scores: Vec<f64>,
    d_proj: Tensor,
    d_scores: Vec<f64>,
}

impl ObjectiveValue {
    /// Push this objective's gradients through the network.
    pub fn backprop(&self, net: &mut ContrastiveNet, cfg: &DeferralConfig) -> Result<()> {
        let mut d_proj = self.d_proj.clone();
        d_proj
            .data_mut()
            .iter_mut()
            .for_each(|v| *v *= cfg.contrastive_weight);
        let d_scores: Vec<f64> = self.d_scores.iter().map(|v| v * cfg.bce_weight).collect();
        net.backward(&d_proj, &d_scores)
    }
}

#[derive(Debug, Clone)]
pub struct DeferralConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub val_fraction: f64,
    pub contrastive_weight: f64,
    pub bce_weight: f64,
    pub seed: u64,
}

impl Default for DeferralConfig {
    fn default() -> Self {
        DeferralConfig {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            margin: 1.0,
            val_fraction: 0.2,
            contrastive_weight: 1.0,
            bce_weight: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DeferralHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub val_accuracy: f64,
    pub n_train: usize,
    pub n_val: usize,
}

/// Stratified 80/20 split of (good, adversarial) rows, then `epochs` of
/// mini-batch Adam on the combined objective with a plateau scheduler on the
/// validation loss.
pub fn train_deferral(
    good: &Tensor,
    adversarial: &Tensor,
    cfg: &DeferralConfig,
) -> Result<(ContrastiveNet, DeferralHistory)> {
    if good.rows() == 0 || adversarial.rows() == 0 {
        return Err(Error::data(
            "deferral training needs both good and adversarial samples",
        ));
    }
    for (t, name) in [(good, "good"), (adversarial, "adversarial")] {
        if t.cols() != FUSED_EMBED_DIM {
            return Err(Error::dim(format!(
                "{name} embeddings must be {FUSED_EMBED_DIM}-d, got {}",
                t.cols()
            )));
        }
    }

    // label 1 = good quality, 0 = adversarial
    let n = good.rows() + adversarial.rows();
    let mut rows: Vec<(&Tensor, usize, u8)> = Vec::with_capacity(n);
    for i in 0..good.rows() {
        rows.push((good, i, 1));
    }
    for i in 0..adversarial.rows() {
        rows.push((adversarial, i, 0));
    }

    // stratified split: per label, shuffle and reserve ceil(frac * n_c)
    let mut split_rng = rng::stream(cfg.seed, "deferral-split");
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for label in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..n).filter(|&i| rows[i].2 == label).collect();
        rng::shuffle(&mut members, &mut split_rng);
        let n_val = ((cfg.val_fraction * members.len() as f64).ceil() as usize).min(members.len());
        val_idx.extend_from_slice(&members[..n_val]);
        train_idx.extend_from_slice(&members[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    if train_idx.len() < 2 {
        return Err(Error::data("deferral training split has fewer than 2 samples"));
    }

    let gather = |idx: &[usize]| -> (Tensor, Vec<u8>) {
        let mut data = Vec::with_capacity(idx.len() * FUSED_EMBED_DIM);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            let (t, r, l) = rows[i];
            data.extend_from_slice(t.row(r));
            labels.push(l);
        }
        (
            Tensor::new(vec![idx.len(), FUSED_EMBED_DIM], data).expect("gather shapes"),
            labels,
        )
    };
    let (val_x, val_labels) = gather(&val_idx);

    let mut net = ContrastiveNet::new(cfg.seed);
    let mut adam = AdamState::for_slots(cfg.lr, &net.param_slots());
    let mut scheduler = PlateauScheduler::new(cfg.lr);
    let mut epoch_rng = rng::stream(cfg.seed, "deferral-epochs");

    let mut history = DeferralHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        lr: Vec::with_capacity(cfg.epochs),
        val_accuracy: 0.0,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
    };

    for _epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        rng::shuffle(&mut order, &mut epoch_rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size.max(2)).collect();
        // batch norm and pairwise terms need >= 2 samples; fold a trailing
        // singleton into the previous batch
        let mut merged_last: Vec<usize> = Vec::new();
        if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() < 2) {
            let last = batches.pop().unwrap();
            let prev = batches.pop().unwrap();
            merged_last.extend_from_slice(prev);
            merged_last.extend_from_slice(last);
        }
        let mut epoch_loss = 0.0;
        let mut batch_count = 0usize;
        let run_batch = |net: &mut ContrastiveNet, adam: &mut AdamState, idx: &[usize]| -> Result<f64> {
            let (x, labels) = gather(idx);
            net.zero_grads();
            let obj = deferral_objective(net, &x, &labels, cfg, NormMode::Train)?;
            obj.backprop(net, cfg)?;
            adam.step(&mut net.param_slots())?;
            Ok(obj.total)
        };
        for batch in &batches {
            epoch_loss += run_batch(&mut net, &mut adam, batch)?;
            batch_count += 1;
        }
        if !merged_last.is_empty() {
            epoch_loss += run_batch(&mut net, &mut adam, &merged_last)?;
            batch_count += 1;
        }
        history.train_loss.push(epoch_loss / batch_count as f64);

        let val_obj = deferral_objective(&mut net, &val_x, &val_labels, cfg, NormMode::Eval)?;
        history.val_loss.push(val_obj.total);
        adam.lr = scheduler.observe(val_obj.total);
        history.lr.push(adam.lr);
    }

    let val_obj = deferral_objective(&mut net, &val_x, &val_labels, cfg, NormMode::Eval)?;
    let correct = val_obj
        .scores
        .iter()
        .zip(&val_labels)
        .filter(|(s, &l)| (**s > 0.5) == (l == 1))
        .count();
    history.val_accuracy = correct as f64 / val_labels.len() as f64;

    Ok((net, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Defer,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DeferralDecision {
    pub quality_score: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Accept only scores strictly above the threshold; the boundary defers.
pub fn decide(quality_score: f64, threshold: f64) -> DeferralDecision {
    DeferralDecision {
        quality_score,
        threshold,
        verdict: if quality_score > threshold {
            Verdict::Accept
        } else {
            Verdict::Defer
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{next_gaussian, stream};

    #[test]
    fn hand_enumerated_three_pair_example() {
        // A,B same class at d=2.0; C other class with d(A,C)=0.3, d(B,C)=0.7.
        // These distances violate the triangle inequality, so they are fed to
        // the distance-level formula directly.
        let d = Tensor::matrix(&[
            vec![0.0, 2.0, 0.3],
            vec![2.0, 0.0, 0.7],
            vec![0.3, 0.7, 0.0],
        ])
        .unwrap();
        let (loss, _) = contrastive_terms(&d, &[0, 0, 1], 1.0).unwrap();
        assert!((loss - 2.5).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn coincident_same_class_points_have_zero_loss() {
        let proj = Tensor::matrix(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let (loss, d_proj) = contrastive_loss(&proj, &[1, 1, 1], 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(d_proj.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn separated_classes_have_inactive_hinge() {
        let proj = Tensor::matrix(&[vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let (loss, _) = contrastive_loss(&proj, &[0, 1, 1], 1.0).unwrap();
        // negative pairs (0,1),(0,2) at distance 5 >= margin contribute 0;
        // positive pair (1,2) at distance 5*sqrt(2)
        assert!((loss - 50.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_class_batch_drops_negative_term() {
        let proj = Tensor::matrix(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let (loss, _) = contrastive_loss(&proj, &[1, 1], 1.0).unwrap();
        assert!((loss - 5.0).abs() < 1e-12);
    }

    #[test]
    fn relabeling_symmetry() {
        let mut rng = stream(5, "defer");
        let data: Vec<f64> = (0..6 * 3).map(|_| next_gaussian(&mut rng)).collect();
        let proj = Tensor::new(vec![6, 3], data).unwrap();
        let labels = [0u8, 1, 0, 1, 1, 0];
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let (a, ga) = contrastive_loss(&proj, &labels, 1.0).unwrap();
        let (b, gb) = contrastive_loss(&proj, &flipped, 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga.data(), gb.data());
    }

    #[test]
    fn rigid_rotation_invariance() {
        let mut rng = stream(6, "defer");
        let n = 5;
        let dim = 4;
        let data: Vec<f64> = (0..n * dim).map(|_| next_gaussian(&mut rng)).collect();
        let proj = Tensor::new(vec![n, dim], data).unwrap();
        let labels = [0u8, 1, 0, 1, 0];
        let (before, _) = contrastive_loss(&proj, &labels, 1.0).unwrap();
        // compose a few Givens rotations (rigid)
        let mut rotated = proj.clone();
        for &(a, b, theta) in &[(0usize, 2usize, 0.7f64), (1, 3, -1.2), (0, 1, 2.1)] {
            let (c, s) = (theta.cos(), theta.sin());
            for i in 0..n {
                let va = rotated.at(i, a);
                let vb = rotated.at(i, b);
                rotated.set(i, a, c * va - s * vb);
                rotated.set(i, b, s * va + c * vb);
            }
        }
        let (after, _) = contrastive_loss(&rotated, &labels, 1.0).unwrap();
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kinks() {
        use crate::nn::max_rel_error_input;
        let mut rng = stream(7, "defer");
        let n = 6;
        let dim = 3;
        // margin huge so every negative hinge is active and far from its kink
        let margin = 100.0;
        let data: Vec<f64> = (0..n * dim).map(|_| next_gaussian(&mut rng) * 2.0).collect();
        let mut proj = Tensor::new(vec![n, dim], data).unwrap();
        let labels = [0u8, 1, 0, 1, 0, 1];
        let (_, d_proj) = contrastive_loss(&proj, &labels, margin).unwrap();
        let err = max_rel_error_input(
            &mut proj,
            &d_proj,
            |p| contrastive_loss(p, &labels, margin).unwrap().0,
            1e-5,
        );
        assert!(err < 1e-4, "contrastive grad err {err}");
    }

    #[test]
    fn objective_components_behave() {
        // head output 0.5 everywhere -> BCE = ln 2
        let mut net = ContrastiveNet::new(11);
        net.head = LinearLayer::from_parts(
            Tensor::zeros(vec![1, PROJECTION_DIM]),
            Tensor::zeros(vec![1]),
        )
        .unwrap();
        let mut rng = stream(11, "defer");
        let data: Vec<f64> = (0..4 * FUSED_EMBED_DIM).map(|_| next_gaussian(&mut rng)).collect();
        let x = Tensor::new(vec![4, FUSED_EMBED_DIM], data).unwrap();
        let cfg = DeferralConfig::default();
        let obj = deferral_objective(&mut net, &x, &[1, 0, 1, 0], &cfg, NormMode::Train).unwrap();
        assert!((obj.bce - 2.0f64.ln()).abs() < 1e-12);
        assert!(obj.total >= obj.contrastive);
    }

    #[test]
    fn full_net_gradients_check() {
        use crate::nn::{max_rel_error_params, GradCheck};
        struct UnderTest {
            net: ContrastiveNet,
            x: Tensor,
            labels: Vec<u8>,
            cfg: DeferralConfig,
        }
        impl HasParams for UnderTest {
            fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
                self.net.param_slots()
            }
        }
        let mut rng = stream(13, "defer-gc");
        let n = 6;
        let data: Vec<f64> = (0..n * FUSED_EMBED_DIM)
            .map(|_| next_gaussian(&mut rng))
            .collect();
        let mut ut = UnderTest {
            net: ContrastiveNet::new(13),
            x: Tensor::new(vec![n, FUSED_EMBED_DIM], data).unwrap(),
            labels: vec![1, 0, 1, 0, 1, 0],
            cfg: DeferralConfig {
                margin: 50.0, // keep hinges active, away from kinks
                ..DeferralConfig::default()
            },
        };
        // Batch statistics change under each parameter perturbation, which is
        // exactly what train mode should differentiate through.
        let cfg = GradCheck {
            max_per_tensor: Some(8),
            seed: 13,
            ..GradCheck::default()
        };
        let err = max_rel_error_params(
            &mut ut,
            |ut| {
                ut.net.zero_grads();
                let obj =
                    deferral_objective(&mut ut.net, &ut.x, &ut.labels, &ut.cfg, NormMode::Train)
                        .unwrap();
                obj.backprop(&mut ut.net, &ut.cfg).unwrap();
                obj.total
            },
            |ut| {
                deferral_objective(&mut ut.net, &ut.x, &ut.labels, &ut.cfg, NormMode::Train)
                    .unwrap()
                    .total
            },
            &cfg,
        );
        assert!(err < 1e-4, "contrastive net grad err {err}");
    }

    #[test]
    fn decide_thresholds() {
        assert_eq!(decide(0.85, DEFAULT_THRESHOLD).verdict, Verdict::Accept);
        assert_eq!(decide(0.75, DEFAULT_THRESHOLD).verdict, Verdict::Defer);
        assert_eq!(decide(0.80, DEFAULT_THRESHOLD).verdict, Verdict::Defer);
    }

    #[test]
    fn separable_clusters_train_to_high_accuracy() {
        // Two Gaussian clusters 10 sigma apart in 1024-d, small-n smoke run;
        // the acceptance suite runs the full-size version of this check.
        let mut rng = stream(1, "defer-train");
        let n_per = 150;
        let mut make = |center: f64| -> Tensor {
            let mut data = Vec::with_capacity(n_per * FUSED_EMBED_DIM);
            for _ in 0..n_per {
                for t in 0..FUSED_EMBED_DIM {
                    let mu = if t == 0 { center } else { 0.0 };
                    data.push(mu + next_gaussian(&mut rng));
                }
            }
            Tensor::new(vec![n_per, FUSED_EMBED_DIM], data).unwrap()
        };
        let good = make(10.0);
        let adv = make(0.0);
        let cfg = DeferralConfig {
            epochs: 40,
            seed: 7,
            ..DeferralConfig::default()
        };
        let (_, history) = train_deferral(&good, &adv, &cfg).unwrap();
        assert!(history.val_accuracy >= 0.85, "val acc {}", history.val_accuracy);
        assert_eq!(history.train_loss.len(), 40);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = stream(19, "defer-det");
        let mut make = |rows: usize| {
            let data: Vec<f64> = (0..rows * FUSED_EMBED_DIM)
                .map(|_| next_gaussian(&mut rng))
                .collect();
            Tensor::new(vec![rows, FUSED_EMBED_DIM], data).unwrap()
        };
        let good = make(10);
        let adv = make(10);
        let cfg = DeferralConfig {
            epochs: 3,
            batch_size: 4,
            seed: 5,
            ..DeferralConfig::default()
        };
        let (_, h1) = train_deferral(&good, &adv, &cfg).unwrap();
        let (_, h2) = train_deferral(&good, &adv, &cfg).unwrap();
        assert_eq!(h1.train_loss, h2.train_loss);
        assert_eq!(h1.val_loss, h2.val_loss);
    }

    #[test]
    fn wrong_embedding_width_is_rejected() {
        let good = Tensor::zeros(vec![3, 512]);
        let adv = Tensor::zeros(vec![3, FUSED_EMBED_DIM]);
        assert!(train_deferral(&good, &adv, &DeferralConfig::default()).is_err());
    }
}
