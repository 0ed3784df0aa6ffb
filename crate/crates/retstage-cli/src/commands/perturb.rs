use std::path::PathBuf;

use clap::Args;

use retstage::data::{downsample_balanced, Dataset};
use retstage::error::{Error, Result};
use retstage::perturb::{make_adversarial, read_ppm, write_ppm, LabeledImage, PerturbConfig};

use crate::commands::list_ppm_dir;
use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct PerturbArgs {
    /// Directory of source PPM images (ids = file stems)
    #[arg(long)]
    pub images: PathBuf,

    /// Dataset file providing DR stages for the image ids
    #[arg(long)]
    pub dataset: PathBuf,

    /// Output directory for the perturbed images (ids preserved)
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Images sampled per DR stage
    #[arg(long)]
    pub per_class: Option<usize>,

    /// Max |rotation| in degrees
    #[arg(long)]
    pub rotation: Option<f64>,

    /// Gaussian blur kernel size (odd)
    #[arg(long)]
    pub blur_kernel: Option<usize>,

    #[arg(long)]
    pub blur_sigma_min: Option<f64>,

    #[arg(long)]
    pub blur_sigma_max: Option<f64>,

    /// Max brightness adjustment
    #[arg(long)]
    pub brightness: Option<f64>,

    /// Max contrast adjustment
    #[arg(long)]
    pub contrast: Option<f64>,

    /// Max saturation adjustment
    #[arg(long)]
    pub saturation: Option<f64>,
}

pub fn run(ctx: &Ctx, args: PerturbArgs) -> Result<()> {
    let per_class = resolve(args.per_class, &ctx.cfg, "perturb.per-class", 20)?;
    let config = PerturbConfig {
        rotation_range_deg: resolve(args.rotation, &ctx.cfg, "perturb.rotation", 30.0)?,
        blur_kernel: resolve(args.blur_kernel, &ctx.cfg, "perturb.blur-kernel", 5)?,
        blur_sigma: (
            resolve(args.blur_sigma_min, &ctx.cfg, "perturb.blur-sigma-min", 0.1)?,
            resolve(args.blur_sigma_max, &ctx.cfg, "perturb.blur-sigma-max", 2.0)?,
        ),
        jitter_brightness: resolve(args.brightness, &ctx.cfg, "perturb.brightness", 0.2)?,
        jitter_contrast: resolve(args.contrast, &ctx.cfg, "perturb.contrast", 0.2)?,
        jitter_saturation: resolve(args.saturation, &ctx.cfg, "perturb.saturation", 0.2)?,
        seed: ctx.seed,
    };
    config.validate()?;

    let dataset = Dataset::load_json(&args.dataset)?;
    let images = list_ppm_dir(&args.images)?;

    // class-balanced selection over the images that have a dataset record
    let mut labels = Vec::with_capacity(images.len());
    for (id, _) in &images {
        let record = dataset
            .record_by_id(id)
            .ok_or_else(|| Error::UnknownId(id.clone()))?;
        labels.push(record.dr_stage);
    }
    let picked = downsample_balanced(&labels, per_class, ctx.seed)?;

    let mut batch = Vec::with_capacity(picked.len());
    for &idx in &picked {
        let (id, path) = &images[idx];
        batch.push(LabeledImage {
            sample_id: id.clone(),
            image: read_ppm(path)?,
            dr_stage: labels[idx],
        });
    }
    let perturbed = make_adversarial(&batch, &config)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for (id, image) in &perturbed {
        write_ppm(&args.out_dir.join(format!("{id}.ppm")), image)?;
    }
    println!(
        "perturb: {} images ({per_class} per stage) -> {}",
        perturbed.len(),
        args.out_dir.display()
    );
    Ok(())
}
