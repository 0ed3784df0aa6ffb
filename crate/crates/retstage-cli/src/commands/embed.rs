use std::path::PathBuf;

use clap::Args;

use retstage::checkpoint::{Checkpoint, ModelKind};
use retstage::data::{Dataset, EmbeddingFile, IMAGE_EMBED_DIM};
use retstage::encoders::ImageEncoder;
use retstage::error::{Error, Result};
use retstage::fusion::FusionModel;
use retstage::perturb::{preprocess, read_ppm};
use retstage::tensor::Tensor;

use crate::commands::{fusion_batch_for_ids, list_ppm_dir};
use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct EmbedArgs {
    /// Directory of PPM images; the file stem is the sample id
    #[arg(long)]
    pub images: PathBuf,

    /// Output embedding file
    #[arg(long)]
    pub out: PathBuf,

    /// Image encoder: `baseline` or `precomputed`
    #[arg(long)]
    pub encoder: Option<String>,

    /// Embedding file backing the `precomputed` encoder
    #[arg(long)]
    pub precomputed: Option<PathBuf>,

    /// Fusion checkpoint; when given, the output is 1024-d fused embeddings
    #[arg(long)]
    pub fusion_checkpoint: Option<PathBuf>,

    /// Dataset file with standardized features (required with a checkpoint)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: EmbedArgs) -> Result<()> {
    let encoder_name: String = resolve(
        args.encoder.clone(),
        &ctx.cfg,
        "embed.encoder",
        "baseline".to_string(),
    )?;
    let encoder = match encoder_name.as_str() {
        "baseline" => ImageEncoder::baseline(ctx.seed),
        "precomputed" => {
            let path = args.precomputed.as_ref().ok_or_else(|| {
                Error::config("--precomputed <file> is required with the precomputed encoder")
            })?;
            ImageEncoder::precomputed(EmbeddingFile::read(path)?)?
        }
        other => {
            return Err(Error::config(format!(
                "unknown encoder '{other}' (expected baseline|precomputed)"
            )))
        }
    };

    let images = list_ppm_dir(&args.images)?;
    let ids: Vec<String> = images.iter().map(|(id, _)| id.clone()).collect();
    let mut data = Vec::with_capacity(ids.len() * IMAGE_EMBED_DIM);
    for (id, path) in &images {
        let embedding = match &encoder {
            ImageEncoder::Precomputed(_) => encoder.encode_id(id)?,
            ImageEncoder::Baseline(_) => {
                let input = preprocess(&read_ppm(path)?)?;
                encoder.encode_image(&input)?
            }
        };
        data.extend(embedding.iter().map(|&v| v as f32));
    }
    let image_embeddings = EmbeddingFile::new(IMAGE_EMBED_DIM, ids.clone(), data)?;

    let output = match &args.fusion_checkpoint {
        None => image_embeddings,
        Some(ckpt_path) => {
            let dataset_path = args.dataset.as_ref().ok_or_else(|| {
                Error::config("--dataset is required when fusing with a checkpoint")
            })?;
            let dataset = Dataset::load_json(dataset_path)?;
            let ckpt = Checkpoint::read(ckpt_path)?;
            if ckpt.kind != ModelKind::Fusion {
                return Err(Error::config(format!(
                    "{} is not a fusion checkpoint",
                    ckpt_path.display()
                )));
            }
            let strategy = ckpt
                .strategy
                .ok_or_else(|| Error::data("fusion checkpoint lacks a strategy tag"))?;
            let mut model = FusionModel::new(strategy, 0);
            ckpt.restore(&mut model)?;
            let batch = fusion_batch_for_ids(&dataset, &image_embeddings, &ids)?;
            let fused: Tensor = model.fuse(&batch.img, &batch.tab)?;
            EmbeddingFile::new(
                fused.cols(),
                ids,
                fused.data().iter().map(|&v| v as f32).collect(),
            )?
        }
    };

    output.write(&args.out)?;
    println!(
        "embed: {} x {} ({}) -> {}",
        output.rows(),
        output.cols(),
        encoder_name,
        args.out.display()
    );
    Ok(())
}
