use std::path::PathBuf;

use clap::Args;

use retstage::error::{Error, Result};
use retstage::metrics::MetricsReport;
use retstage::util::atomic_write;

use crate::Ctx;

#[derive(Args)]
pub struct ReportArgs {
    /// Metrics to aggregate, as `label=path/to/metrics.json` (repeatable)
    #[arg(long = "metrics", required = true)]
    pub metrics: Vec<String>,

    /// Output directory (report.md, report.json)
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(_ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let mut entries: Vec<(String, MetricsReport)> = Vec::new();
    for spec in &args.metrics {
        let (label, path) = spec.split_once('=').ok_or_else(|| {
            Error::config(format!("--metrics wants label=path, got '{spec}'"))
        })?;
        entries.push((label.to_string(), MetricsReport::load_json(&PathBuf::from(path))?));
    }

    let fmt_auroc = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let mut md = String::from("# Staging pipeline report\n\n");
    md.push_str("| run | n | accuracy | macro OvR AUROC | deferral rate |\n");
    md.push_str("|-----|---|----------|-----------------|---------------|\n");
    for (label, m) in &entries {
        md.push_str(&format!(
            "| {label} | {} | {:.4} | {} | {} |\n",
            m.n,
            m.accuracy,
            fmt_auroc(m.auroc_macro),
            m.deferral_rate
                .map_or("n/a".to_string(), |v| format!("{v:.4}")),
        ));
    }
    md.push('\n');
    for (label, m) in &entries {
        md.push_str(&format!("## {label}\n\nConfusion matrix (rows = true stage):\n\n"));
        md.push_str("| |");
        for j in 0..m.confusion.len() {
            md.push_str(&format!(" pred {j} |"));
        }
        md.push('\n');
        md.push_str("|--|");
        for _ in 0..m.confusion.len() {
            md.push_str("----|");
        }
        md.push('\n');
        for (i, row) in m.confusion.iter().enumerate() {
            md.push_str(&format!("| true {i} |"));
            for v in row {
                md.push_str(&format!(" {v} |"));
            }
            md.push('\n');
        }
        md.push_str("\nPer-class AUROC: ");
        let cells: Vec<String> = m.auroc_per_class.iter().map(|&v| fmt_auroc(v)).collect();
        md.push_str(&cells.join(", "));
        md.push_str("\n\n");
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    atomic_write(&args.out_dir.join("report.md"), md.as_bytes())?;

    let json: Vec<serde_json::Value> = entries
        .iter()
        .map(|(label, m)| serde_json::json!({ "label": label, "metrics": m }))
        .collect();
    atomic_write(
        &args.out_dir.join("report.json"),
        serde_json::to_string_pretty(&json)?.as_bytes(),
    )?;
    println!(
        "report: {} runs -> {}",
        entries.len(),
        args.out_dir.display()
    );
    Ok(())
}
