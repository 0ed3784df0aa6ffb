//! Evaluation: confusion matrix, one-vs-rest AUROC, and report files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util;

/// K x K counts, rows = true class, columns = predicted class.
pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8], k: usize) -> Result<Vec<Vec<usize>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::dim(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t as usize >= k || p as usize >= k {
            return Err(Error::data(format!(
                "label ({t},{p}) out of range for {k} classes"
            )));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Row-wise softmax of logits.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let n = out.rows();
    for i in 0..n {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Argmax with smallest-index tie break.
pub fn argmax_row(row: &[f64]) -> u8 {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u8
}

#[derive(Debug, Clone)]
pub struct AurocOvr {
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean over classes with a defined AUROC; `None` when no
    /// class has both positives and negatives.
    pub macro_avg: Option<f64>,
    /// Classes excluded from the macro average.
    pub skipped: Vec<usize>,
}

/// One-vs-rest AUROC per class from a rank statistic (Mann-Whitney), ties
/// counted 1/2. `scores` is `[n x K]` (softmax probabilities or any
/// monotone-equivalent score).
pub fn auroc_ovr(scores: &Tensor, y_true: &[u8]) -> Result<AurocOvr> {
    let n = scores.rows();
    let k = scores.cols();
    if y_true.len() != n {
        return Err(Error::dim(format!(
            "{n} score rows vs {} labels",
            y_true.len()
        )));
    }
    if n < 2 {
        return Err(Error::data("auroc needs at least 2 samples"));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    for c in 0..k {
        let n_pos = y_true.iter().filter(|&&t| t as usize == c).count();
        let n_neg = n - n_pos;
        if n_pos == 0 || n_neg == 0 {
            per_class.push(None);
            skipped.push(c);
            continue;
        }
        // ascending by score; average ranks over tied runs
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            scores
                .at(a, c)
                .partial_cmp(&scores.at(b, c))
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        let mut rank_sum_pos = 0.0;
        let mut i = 0usize;
        while i < n {
            let mut j = i;
            while j + 1 < n && scores.at(order[j + 1], c) == scores.at(order[i], c) {
                j += 1;
            }
            // 1-based ranks i+1 ..= j+1 share the average
            let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
            for &idx in &order[i..=j] {
                if y_true[idx] as usize == c {
                    rank_sum_pos += avg_rank;
                }
            }
            i = j + 1;
        }
        let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
        per_class.push(Some(u / (n_pos as f64 * n_neg as f64)));
    }
    let defined: Vec<f64> = per_class.iter().filter_map(|&v| v).collect();
    let macro_avg = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(AurocOvr {
        per_class,
        macro_avg,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub auroc_per_class: Vec<Option<f64>>,
    pub auroc_macro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deferral_rate: Option<f64>,
}

/// Confusion, accuracy, and OvR AUROC from score rows and true labels.
pub fn evaluate(scores: &Tensor, y_true: &[u8]) -> Result<MetricsReport> {
    let n = scores.rows();
    let k = scores.cols();
    let y_pred: Vec<u8> = (0..n).map(|i| argmax_row(scores.row(i))).collect();
    let confusion = confusion_matrix(y_true, &y_pred, k)?;
    let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
    let auroc = auroc_ovr(scores, y_true)?;
    Ok(MetricsReport {
        n,
        accuracy: trace as f64 / n as f64,
        confusion,
        auroc_per_class: auroc.per_class,
        auroc_macro: auroc.macro_avg,
        deferral_rate: None,
    })
}

impl MetricsReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        util::atomic_write(path, &bytes)
    }

    pub fn load_json(path: &Path) -> Result<MetricsReport> {
        Ok(serde_json::from_str(&util::read_string(path)?)?)
    }
}

/// Emit `<stem>.json`, `<stem>_confusion.csv`, `<stem>_confusion.svg`.
pub fn report_emit(report: &MetricsReport, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    report.save_json(&dir.join(format!("{stem}.json")))?;

    let mut csv_text = String::new();
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        csv_text.push_str(&cells.join(","));
        csv_text.push('\n');
    }
    util::atomic_write(&dir.join(format!("{stem}_confusion.csv")), csv_text.as_bytes())?;

    let svg = confusion_svg(&report.confusion);
    util::atomic_write(&dir.join(format!("{stem}_confusion.svg")), svg.as_bytes())
}

/// Heatmap with a fixed white-to-blue ramp and the count printed in each cell.
pub fn confusion_svg(confusion: &[Vec<usize>]) -> String {
    let k = confusion.len();
    let cell = 48usize;
    let margin = 56usize;
    let size = margin + k * cell + 16;
    let max = confusion
        .iter()
        .flat_map(|r| r.iter())
        .cloned()
        .max()
        .unwrap_or(0)
        .max(1);
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    s.push_str("<style>text{font-family:monospace;font-size:12px}</style>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"16\" text-anchor=\"middle\">predicted</text>\n",
        margin + k * cell / 2
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">true</text>\n",
        margin + k * cell / 2,
        margin + k * cell / 2
    ));
    for (i, row) in confusion.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{i}</text>\n",
            margin - 14,
            margin + i * cell + cell / 2 + 4
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{i}</text>\n",
            margin + i * cell + cell / 2,
            margin - 8
        ));
        for (j, &count) in row.iter().enumerate() {
            let t = count as f64 / max as f64;
            // white (255,255,255) -> steel blue (33,102,172)
            let r = (255.0 - t * (255.0 - 33.0)).round() as u8;
            let g = (255.0 - t * (255.0 - 102.0)).round() as u8;
            let b = (255.0 - t * (255.0 - 172.0)).round() as u8;
            let x = margin + j * cell;
            let y = margin + i * cell;
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({r},{g},{b})\" stroke=\"#888\"/>\n"
            ));
            let text_fill = if t > 0.55 { "#ffffff" } else { "#000000" };
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{text_fill}\">{count}</text>\n",
                x + cell / 2,
                y + cell / 2 + 4
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}
