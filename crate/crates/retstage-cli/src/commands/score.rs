use std::path::PathBuf;

use clap::Args;

use retstage::checkpoint::{Checkpoint, ModelKind};
use retstage::data::{EmbeddingFile, FUSED_EMBED_DIM};
use retstage::deferral::{decide, ContrastiveNet, Verdict};
use retstage::error::{Error, Result};
use retstage::nn::NormMode;
use retstage::util::atomic_write;

use crate::commands::require_dim;
use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct ScoreArgs {
    /// Deferral checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Fused embedding file to score
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Acceptance threshold (scores above it are accepted)
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Output CSV (id, score, verdict)
    #[arg(long)]
    pub out: PathBuf,

    /// Optional 64-d projection embedding file for visualization
    #[arg(long)]
    pub projections_out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: ScoreArgs) -> Result<()> {
    let threshold = resolve(args.threshold, &ctx.cfg, "score.threshold", 0.8)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!(
            "threshold {threshold} must lie in [0, 1]"
        )));
    }
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    if ckpt.kind != ModelKind::Deferral {
        return Err(Error::config(format!(
            "{} is not a deferral checkpoint",
            args.checkpoint.display()
        )));
    }
    let mut net = ContrastiveNet::new(0);
    ckpt.restore(&mut net)?;

    let embeddings = EmbeddingFile::read(&args.embeddings)?;
    require_dim(&embeddings, FUSED_EMBED_DIM, "fused embeddings")?;
    if embeddings.rows() == 0 {
        return Err(Error::data("embedding file is empty"));
    }

    let proj = net.project(&embeddings.to_tensor(), NormMode::Eval)?;
    let scores = net.score(&proj)?;

    let mut csv = String::from("id,score,verdict\n");
    let mut deferred = 0usize;
    for (id, &score) in embeddings.ids().iter().zip(&scores) {
        let decision = decide(score, threshold);
        if decision.verdict == Verdict::Defer {
            deferred += 1;
        }
        let verdict = match decision.verdict {
            Verdict::Accept => "accept",
            Verdict::Defer => "defer",
        };
        csv.push_str(&format!("{id},{score:.6},{verdict}\n"));
    }
    atomic_write(&args.out, csv.as_bytes())?;

    if let Some(proj_path) = &args.projections_out {
        let proj_file = EmbeddingFile::new(
            proj.cols(),
            embeddings.ids().to_vec(),
            proj.data().iter().map(|&v| v as f32).collect(),
        )?;
        proj_file.write(proj_path)?;
    }
    println!(
        "score: {} samples, deferral rate {:.4} (threshold {threshold}) -> {}",
        scores.len(),
        deferred as f64 / scores.len() as f64,
        args.out.display()
    );
    Ok(())
}
