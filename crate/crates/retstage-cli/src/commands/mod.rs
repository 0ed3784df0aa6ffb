pub mod embed;
pub mod perturb;
pub mod prep;
pub mod report;
pub mod score;
pub mod synth;
pub mod train;
pub mod tsne_cmd;

use std::path::{Path, PathBuf};

use retstage::data::{Dataset, EmbeddingFile};
use retstage::error::{Error, Result};
use retstage::tensor::Tensor;
use retstage::train::FusionBatch;

/// PPM files in a directory, sorted by sample id (= file stem).
pub fn list_ppm_dir(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("ppm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::data(format!("bad file name {}", path.display())))?
                .to_string();
            out.push((stem, path));
        }
    }
    if out.is_empty() {
        return Err(Error::data(format!(
            "no .ppm images found in {}",
            dir.display()
        )));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Align dataset records with embedding rows into one fusion batch.
/// `ids` picks the subset (and order); every id must exist in both.
pub fn fusion_batch_for_ids(
    dataset: &Dataset,
    embeddings: &EmbeddingFile,
    ids: &[String],
) -> Result<FusionBatch> {
    let mut img = Vec::with_capacity(ids.len() * embeddings.cols());
    let mut tab = Vec::with_capacity(ids.len() * 4);
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let row = embeddings.lookup(id)?;
        img.extend(row.iter().map(|&v| f64::from(v)));
        let record = dataset
            .record_by_id(id)
            .ok_or_else(|| Error::UnknownId(id.clone()))?;
        tab.extend_from_slice(&dataset.selected_features(record));
        labels.push(record.dr_stage);
    }
    FusionBatch::new(
        ids.to_vec(),
        Tensor::new(vec![ids.len(), embeddings.cols()], img)?,
        Tensor::new(vec![ids.len(), 4], tab)?,
        labels,
    )
}

pub fn require_dim(file: &EmbeddingFile, want: usize, what: &str) -> Result<()> {
    if file.cols() != want {
        return Err(Error::dim(format!(
            "{what} must have {want} columns, got {}",
            file.cols()
        )));
    }
    Ok(())
}
