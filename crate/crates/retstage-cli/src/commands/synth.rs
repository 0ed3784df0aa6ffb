use std::path::PathBuf;

use clap::Args;

use retstage::data::{synth_generate, write_csv, SynthConfig};
use retstage::error::{Error, Result};
use retstage::perturb::write_ppm;

use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory (dataset.csv, embeddings.bin(+.ids), images/)
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Samples per DR stage
    #[arg(long)]
    pub per_class: Option<usize>,

    /// Distance between class centers in embedding space
    #[arg(long)]
    pub separation: Option<f64>,

    /// Embedding noise sigma
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Fraction of dm_time / educational_level cells left empty
    #[arg(long)]
    pub missing_rate: Option<f64>,

    /// Side length of generated PPM images (0 disables images)
    #[arg(long)]
    pub image_side: Option<usize>,
}

pub fn run(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_per_class: resolve(args.per_class, &ctx.cfg, "synth.per-class", 128)?,
        seed: ctx.seed,
        class_separation: resolve(args.separation, &ctx.cfg, "synth.separation", 10.0)?,
        noise_sigma: resolve(args.sigma, &ctx.cfg, "synth.sigma", 1.0)?,
        missing_rate: resolve(args.missing_rate, &ctx.cfg, "synth.missing-rate", 0.01)?,
        image_side: resolve(args.image_side, &ctx.cfg, "synth.image-side", 64)?,
    };
    if cfg.n_per_class == 0 {
        return Err(Error::config("per-class must be at least 1"));
    }
    let out = synth_generate(&cfg)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    write_csv(&args.out_dir.join("dataset.csv"), &out.records)?;
    out.embeddings.write(&args.out_dir.join("embeddings.bin"))?;
    if !out.images.is_empty() {
        let images_dir = args.out_dir.join("images");
        std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
        for (id, image) in &out.images {
            write_ppm(&images_dir.join(format!("{id}.ppm")), image)?;
        }
    }
    println!(
        "synth: {} samples, embeddings {}x{}, {} images -> {}",
        out.records.len(),
        out.embeddings.rows(),
        out.embeddings.cols(),
        out.images.len(),
        args.out_dir.display()
    );
    Ok(())
}
