use std::path::PathBuf;

use clap::Args;

use retstage::data::{clean, read_csv, split_train_test, standardize_fit_transform};
use retstage::error::Result;

use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct PrepArgs {
    /// Raw CSV (patient_id, 17 feature columns, dr_stage)
    #[arg(long)]
    pub csv: PathBuf,

    /// Output dataset file (JSON)
    #[arg(long)]
    pub out: PathBuf,

    /// Train fraction
    #[arg(long)]
    pub ratio: Option<f64>,
}

pub fn run(ctx: &Ctx, args: PrepArgs) -> Result<()> {
    let ratio = resolve(args.ratio, &ctx.cfg, "prep.ratio", 0.8)?;
    let raw = read_csv(&args.csv)?;
    let mut dataset = clean(&raw)?;
    split_train_test(&mut dataset, ratio, ctx.seed)?;
    standardize_fit_transform(&mut dataset)?;
    dataset.save_json(&args.out)?;
    let train = dataset
        .records
        .iter()
        .filter(|r| r.split == Some(retstage::data::Split::Train))
        .count();
    println!(
        "prep: {} raw rows -> {} records ({} train / {} test) -> {}",
        raw.len(),
        dataset.len(),
        train,
        dataset.len() - train,
        args.out.display()
    );
    Ok(())
}
