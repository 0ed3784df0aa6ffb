use std::path::PathBuf;

use clap::Args;

use retstage::data::EmbeddingFile;
use retstage::error::{Error, Result};
use retstage::tensor::Tensor;
use retstage::tsne::{tsne_embed, TsneConfig};
use retstage::util::atomic_write;

use crate::config::resolve;
use crate::Ctx;

#[derive(Args)]
pub struct TsneArgs {
    /// Embedding file(s); multiple files are concatenated
    #[arg(long, required = true)]
    pub embeddings: Vec<PathBuf>,

    /// One label per embedding file (defaults to the file stem)
    #[arg(long)]
    pub labels: Vec<String>,

    /// Output directory (coords.csv, scatter.svg)
    #[arg(long)]
    pub out_dir: PathBuf,

    #[arg(long)]
    pub perplexity: Option<f64>,

    #[arg(long)]
    pub iterations: Option<usize>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

pub fn run(ctx: &Ctx, args: TsneArgs) -> Result<()> {
    let cfg = TsneConfig {
        perplexity: resolve(args.perplexity, &ctx.cfg, "tsne.perplexity", 30.0)?,
        iterations: resolve(args.iterations, &ctx.cfg, "tsne.iterations", 1000)?,
        seed: ctx.seed,
        ..TsneConfig::default()
    };
    if !args.labels.is_empty() && args.labels.len() != args.embeddings.len() {
        return Err(Error::config(format!(
            "{} labels for {} embedding files",
            args.labels.len(),
            args.embeddings.len()
        )));
    }

    let mut ids: Vec<String> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let mut cols: Option<usize> = None;
    for (i, path) in args.embeddings.iter().enumerate() {
        let file = EmbeddingFile::read(path)?;
        match cols {
            None => cols = Some(file.cols()),
            Some(c) if c != file.cols() => {
                return Err(Error::dim(format!(
                    "{} has {} columns, previous files have {c}",
                    path.display(),
                    file.cols()
                )))
            }
            _ => {}
        }
        let label = args
            .labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| {
                path.file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("embeddings")
                    .to_string()
            });
        for id in file.ids() {
            ids.push(id.clone());
            labels.push(label.clone());
        }
        data.extend(file.data().iter().map(|&v| f64::from(v)));
    }
    let cols = cols.ok_or_else(|| Error::config("no embedding files given"))?;
    let x = Tensor::new(vec![ids.len(), cols], data)?;

    let result = tsne_embed(&x, &cfg)?;
    if result.calibration_capped > 0 {
        eprintln!(
            "warning: {} of {} points hit the bandwidth-search cap (worst entropy error {:.2e})",
            result.calibration_capped,
            ids.len(),
            result.calibration_max_err
        );
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut csv = String::from("id,x,y,label\n");
    for (i, (id, label)) in ids.iter().zip(&labels).enumerate() {
        csv.push_str(&format!(
            "{id},{:.6},{:.6},{label}\n",
            result.coords.at(i, 0),
            result.coords.at(i, 1)
        ));
    }
    atomic_write(&args.out_dir.join("coords.csv"), csv.as_bytes())?;

    let svg = scatter_svg(&result.coords, &labels);
    atomic_write(&args.out_dir.join("scatter.svg"), svg.as_bytes())?;
    println!(
        "tsne: {} points, final KL {:.4} -> {}",
        ids.len(),
        result.kl_history.last().unwrap_or(&f64::NAN),
        args.out_dir.display()
    );
    Ok(())
}

fn scatter_svg(coords: &Tensor, labels: &[String]) -> String {
    let n = coords.rows();
    let size = 520.0f64;
    let margin = 40.0f64;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        min_x = min_x.min(coords.at(i, 0));
        max_x = max_x.max(coords.at(i, 0));
        min_y = min_y.min(coords.at(i, 1));
        max_y = max_y.max(coords.at(i, 1));
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);

    let mut distinct: Vec<&String> = Vec::new();
    for l in labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    let color_of = |label: &String| {
        let idx = distinct.iter().position(|&l| l == label).unwrap_or(0);
        PALETTE[idx % PALETTE.len()]
    };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        size as usize
    ));
    s.push_str("<style>text{font-family:monospace;font-size:12px}</style>\n");
    for (i, label) in distinct.iter().enumerate() {
        let y = 18.0 + i as f64 * 16.0;
        s.push_str(&format!(
            "<circle cx=\"14\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/><text x=\"24\" y=\"{:.1}\">{}</text>\n",
            y,
            color_of(label),
            y + 4.0,
            label
        ));
    }
    for i in 0..n {
        let px = margin + (coords.at(i, 0) - min_x) / span_x * (size - 2.0 * margin);
        let py = margin + (coords.at(i, 1) - min_y) / span_y * (size - 2.0 * margin);
        s.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
            color_of(&labels[i])
        ));
    }
    s.push_str("</svg>\n");
    s
}
