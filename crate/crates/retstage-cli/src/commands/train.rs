use std::path::PathBuf;

use clap::Args;

use retstage::checkpoint::{Checkpoint, ModelKind};
use retstage::data::{downsample_balanced, Dataset, EmbeddingFile, Split, FUSED_EMBED_DIM};
use retstage::deferral::{train_deferral, DeferralConfig};
use retstage::error::{Error, Result};
use retstage::fusion::Strategy;
use retstage::metrics::report_emit;
use retstage::train::{
    train_fusion_cv, train_tabular, FusionTrainConfig, TabularTrainConfig,
};
use retstage::util::atomic_write;

use crate::commands::{fusion_batch_for_ids, require_dim};
use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct TrainTabularArgs {
    /// Prepared dataset file (split + standardized)
    #[arg(long)]
    pub dataset: PathBuf,

    /// Output directory (model.ckpt, train/test metrics)
    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,
}

pub fn run_tabular(ctx: &Ctx, args: TrainTabularArgs) -> Result<()> {
    let cfg = TabularTrainConfig {
        epochs: resolve(args.epochs, &ctx.cfg, "train-tabular.epochs", 20)?,
        batch_size: resolve(args.batch_size, &ctx.cfg, "train-tabular.batch-size", 32)?,
        lr: resolve(args.lr, &ctx.cfg, "train-tabular.lr", 1e-3)?,
        seed: ctx.seed,
    };
    let dataset = Dataset::load_json(&args.dataset)?;
    let mut outcome = train_tabular(&dataset, &cfg)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    Checkpoint::capture(ModelKind::Tabular, None, &mut outcome.model)
        .write(&args.out_dir.join("model.ckpt"))?;
    report_emit(&outcome.train_metrics, &args.out_dir, "train")?;
    report_emit(&outcome.test_metrics, &args.out_dir, "test")?;
    println!(
        "train-tabular: test accuracy {:.4}, macro AUROC {} -> {}",
        outcome.test_metrics.accuracy,
        outcome
            .test_metrics
            .auroc_macro
            .map_or("n/a".to_string(), |v| format!("{v:.4}")),
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainFusionArgs {
    /// Fusion strategy: concat | fc | xattn
    #[arg(long)]
    pub strategy: String,

    /// Prepared dataset file
    #[arg(long)]
    pub dataset: PathBuf,

    /// 512-d image embedding file keyed by sample id
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Output directory (model.ckpt, fold and held-out metrics)
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Balanced downsample size per stage for the CV set
    #[arg(long)]
    pub per_class: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub folds: Option<usize>,
}

pub fn run_fusion(ctx: &Ctx, args: TrainFusionArgs) -> Result<()> {
    let strategy = Strategy::parse(&args.strategy)?;
    let cfg = FusionTrainConfig {
        strategy,
        epochs: resolve(args.epochs, &ctx.cfg, "train-fusion.epochs", 10)?,
        batch_size: resolve(args.batch_size, &ctx.cfg, "train-fusion.batch-size", 32)?,
        lr: resolve(args.lr, &ctx.cfg, "train-fusion.lr", 1e-3)?,
        k_folds: resolve(args.folds, &ctx.cfg, "train-fusion.folds", 5)?,
        seed: ctx.seed,
    };
    let per_class = resolve(args.per_class, &ctx.cfg, "train-fusion.per-class", 82)?;

    let dataset = Dataset::load_json(&args.dataset)?;
    let embeddings = EmbeddingFile::read(&args.embeddings)?;
    require_dim(&embeddings, 512, "image embeddings")?;

    // CV pool: balanced downsample of the train split
    let split_ids = |want: Split| -> Vec<(String, u8)> {
        dataset
            .records
            .iter()
            .filter(|r| r.split == Some(want))
            .map(|r| (r.sample_id.clone(), r.dr_stage))
            .collect()
    };
    let train_pool = split_ids(Split::Train);
    if train_pool.is_empty() {
        return Err(Error::data("dataset has no train split"));
    }
    let train_labels: Vec<u8> = train_pool.iter().map(|(_, c)| *c).collect();
    let cv_ids: Vec<String> = downsample_balanced(&train_labels, per_class, ctx.seed)?
        .into_iter()
        .map(|i| train_pool[i].0.clone())
        .collect();

    // held-out: the test split balanced to its smallest class
    let test_pool = split_ids(Split::Test);
    if test_pool.is_empty() {
        return Err(Error::data("dataset has no test split"));
    }
    let test_labels: Vec<u8> = test_pool.iter().map(|(_, c)| *c).collect();
    let mut counts = [0usize; 5];
    for &c in &test_labels {
        counts[c as usize] += 1;
    }
    let min_count = *counts.iter().min().unwrap();
    if min_count == 0 {
        let missing = counts.iter().position(|&c| c == 0).unwrap();
        return Err(Error::data(format!(
            "test split has no samples of stage {missing}; cannot build a balanced held-out set"
        )));
    }
    let heldout_ids: Vec<String> =
        downsample_balanced(&test_labels, min_count, ctx.seed.wrapping_add(1))?
            .into_iter()
            .map(|i| test_pool[i].0.clone())
            .collect();

    let cv = fusion_batch_for_ids(&dataset, &embeddings, &cv_ids)?;
    let heldout = fusion_batch_for_ids(&dataset, &embeddings, &heldout_ids)?;
    let mut outcome = train_fusion_cv(&cv, &heldout, &cfg)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    Checkpoint::capture(ModelKind::Fusion, Some(strategy), &mut outcome.final_model)
        .write(&args.out_dir.join("model.ckpt"))?;
    for (f, fold) in outcome.folds.iter().enumerate() {
        report_emit(&fold.train, &args.out_dir, &format!("fold{f}_train"))?;
        report_emit(&fold.val, &args.out_dir, &format!("fold{f}_val"))?;
    }
    report_emit(&outcome.heldout_metrics, &args.out_dir, "heldout")?;

    let summary = serde_json::json!({
        "strategy": strategy.tag(),
        "cv_samples": cv.len(),
        "heldout_samples": heldout.len(),
        "mean_fold_train_accuracy": outcome.mean_fold_train_accuracy(),
        "mean_fold_val_accuracy": outcome.mean_fold_val_accuracy(),
        "mean_fold_train_auroc": outcome.mean_fold_train_auroc(),
        "mean_fold_val_auroc": outcome.mean_fold_val_auroc(),
        "heldout_accuracy": outcome.heldout_metrics.accuracy,
        "heldout_auroc_macro": outcome.heldout_metrics.auroc_macro,
    });
    atomic_write(
        &args.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    println!(
        "train-fusion[{}]: mean fold val accuracy {:.4}, held-out accuracy {:.4} -> {}",
        strategy.tag(),
        outcome.mean_fold_val_accuracy(),
        outcome.heldout_metrics.accuracy,
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainDeferralArgs {
    /// Fused embeddings of good-quality samples
    #[arg(long)]
    pub good: PathBuf,

    /// Fused embeddings of adversarial samples
    #[arg(long)]
    pub adversarial: PathBuf,

    /// Output directory (model.ckpt, history.json)
    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    /// Contrastive margin
    #[arg(long)]
    pub margin: Option<f64>,

    #[arg(long)]
    pub val_fraction: Option<f64>,
}

pub fn run_deferral(ctx: &Ctx, args: TrainDeferralArgs) -> Result<()> {
    let cfg = DeferralConfig {
        epochs: resolve(args.epochs, &ctx.cfg, "train-deferral.epochs", 100)?,
        batch_size: resolve(args.batch_size, &ctx.cfg, "train-deferral.batch-size", 64)?,
        lr: resolve(args.lr, &ctx.cfg, "train-deferral.lr", 1e-3)?,
        margin: resolve(args.margin, &ctx.cfg, "train-deferral.margin", 1.0)?,
        val_fraction: resolve(args.val_fraction, &ctx.cfg, "train-deferral.val-fraction", 0.2)?,
        contrastive_weight: 1.0,
        bce_weight: 1.0,
        seed: ctx.seed,
    };
    let good = EmbeddingFile::read(&args.good)?;
    let adversarial = EmbeddingFile::read(&args.adversarial)?;
    for (file, what) in [(&good, "good"), (&adversarial, "adversarial")] {
        require_dim(file, FUSED_EMBED_DIM, &format!("{what} embeddings"))?;
        if file.rows() == 0 {
            return Err(Error::data(format!("{what} embedding file is empty")));
        }
    }
    let (mut net, history) = train_deferral(&good.to_tensor(), &adversarial.to_tensor(), &cfg)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    Checkpoint::capture(ModelKind::Deferral, None, &mut net)
        .write(&args.out_dir.join("model.ckpt"))?;
    atomic_write(
        &args.out_dir.join("history.json"),
        serde_json::to_string_pretty(&history)?.as_bytes(),
    )?;
    println!(
        "train-deferral: {} train / {} val samples, val accuracy {:.4} -> {}",
        history.n_train,
        history.n_val,
        history.val_accuracy,
        args.out_dir.display()
    );
    Ok(())
}
