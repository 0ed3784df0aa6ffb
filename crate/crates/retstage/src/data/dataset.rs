//! Tabular records, cleaning, and standardization.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const NUM_FEATURES: usize = 17;

/// Fixed CSV schema: `patient_id`, the 17 feature columns, `dr_stage`.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "age",
    "sex",
    "dm_time",
    "insulin",
    "insulin_time",
    "oraltreatment_dm",
    "systemic_hypertension",
    "insurance",
    "educational_level",
    "alcohol_consumption",
    "smoking",
    "obesity",
    "vascular_disease",
    "acute_myocardial_infarction",
    "nephropathy",
    "neuropathy",
    "diabetic_foot",
];

/// The four features fed to the multimodal model, in token order.
pub const SELECTED_FEATURES: [&str; 4] = ["educational_level", "sex", "dm_time", "age"];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&f| f == name)
}

/// Indices of [`SELECTED_FEATURES`] within [`FEATURE_NAMES`].
pub fn selected_indices() -> [usize; 4] {
    let mut out = [0usize; 4];
    for (i, name) in SELECTED_FEATURES.iter().enumerate() {
        out[i] = feature_index(name).expect("selected feature is part of the schema");
    }
    out
}

/// One raw row as parsed from CSV; empty cells become `None`.
#[derive(Debug, Clone)]
pub struct TabularRecord {
    pub patient_id: String,
    pub features: Vec<Option<f64>>,
    pub dr_stage: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A cleaned sample: imputation done, stage known, id assigned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    pub sample_id: String,
    pub patient_id: String,
    pub features: Vec<f64>,
    pub dr_stage: u8,
    pub split: Option<Split>,
}

/// Per-feature standardization statistics (population variance, fit on the
/// train split only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fit over rows of equal width. Needs at least 2 rows.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone) -> Result<Scaler> {
        let n = rows.clone().count();
        if n < 2 {
            return Err(Error::data(format!(
                "scaler needs at least 2 samples, got {n}"
            )));
        }
        let width = rows.clone().next().map_or(0, <[f64]>::len);
        let nf = n as f64;
        let mut mean = vec![0.0; width];
        for row in rows.clone() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; width];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let c = v - m;
                *s += c * c;
            }
        }
        let std = var.iter().map(|v| (v / nf).sqrt()).collect();
        Ok(Scaler { mean, std })
    }

    /// (x - mean) / std per feature; zero-std features map to 0.
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = if *s == 0.0 { 0.0 } else { (*v - *m) / *s };
        }
    }
}

/// Cleaned dataset plus split tags and (after standardization) the scaler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub records: Vec<Record>,
    pub scaler: Option<Scaler>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record_by_id(&self, sample_id: &str) -> Option<&Record> {
        // Datasets are small; linear scan keeps the type serialization-plain.
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    /// Selected-feature values of one record, in token order.
    pub fn selected_features(&self, record: &Record) -> [f64; 4] {
        let idx = selected_indices();
        [
            record.features[idx[0]],
            record.features[idx[1]],
            record.features[idx[2]],
            record.features[idx[3]],
        ]
    }

    pub fn class_counts(&self) -> [usize; 5] {
        let mut counts = [0usize; 5];
        for r in &self.records {
            counts[r.dr_stage as usize] += 1;
        }
        counts
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        util::atomic_write(path, &bytes)
    }

    pub fn load_json(path: &Path) -> Result<Dataset> {
        let text = util::read_string(path)?;
        let ds: Dataset = serde_json::from_str(&text)?;
        if ds.feature_names.len() != NUM_FEATURES {
            return Err(Error::data(format!(
                "dataset file has {} feature names, expected {NUM_FEATURES}",
                ds.feature_names.len()
            )));
        }
        Ok(ds)
    }
}

/// Drop records with a missing stage, then impute remaining missing feature
/// values with the per-feature mode over the retained samples (ties break
/// toward the smaller value). Sample ids are the original row numbers, so
/// they stay stable under cleaning.
pub fn clean(records: &[TabularRecord]) -> Result<Dataset> {
    let kept: Vec<(usize, &TabularRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.dr_stage.is_some())
        .collect();
    if kept.is_empty() {
        return Err(Error::data("no records with a known dr_stage"));
    }
    for (row, rec) in &kept {
        let stage = rec.dr_stage.unwrap();
        if stage > 4 {
            return Err(Error::data(format!(
                "row {row}: dr_stage {stage} outside 0..=4"
            )));
        }
        if rec.features.len() != NUM_FEATURES {
            return Err(Error::data(format!(
                "row {row}: {} features, expected {NUM_FEATURES}",
                rec.features.len()
            )));
        }
    }

    let mut modes: Vec<Option<f64>> = vec![None; NUM_FEATURES];
    for f in 0..NUM_FEATURES {
        let mut values: Vec<f64> = kept
            .iter()
            .filter_map(|(_, r)| r.features[f])
            .collect();
        if kept.iter().all(|(_, r)| r.features[f].is_some()) {
            continue; // nothing to impute
        }
        if values.is_empty() {
            return Err(Error::data(format!(
                "feature '{}' is missing in every record; cannot impute",
                FEATURE_NAMES[f]
            )));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = (values[0], 0usize);
        let mut run = (values[0], 0usize);
        for &v in &values {
            if v == run.0 {
                run.1 += 1;
            } else {
                run = (v, 1);
            }
            if run.1 > best.1 {
                best = run;
            }
        }
        modes[f] = Some(best.0);
    }

    let records = kept
        .into_iter()
        .map(|(row, rec)| Record {
            sample_id: format!("s{row:05}"),
            patient_id: rec.patient_id.clone(),
            features: rec
                .features
                .iter()
                .enumerate()
                .map(|(f, v)| v.unwrap_or_else(|| modes[f].expect("mode exists")))
                .collect(),
            dr_stage: rec.dr_stage.unwrap(),
            split: None,
        })
        .collect();

    Ok(Dataset {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        records,
        scaler: None,
    })
}

/// Fit the scaler on the train split and transform every record in place.
/// Requires split tags to be assigned.
pub fn standardize_fit_transform(dataset: &mut Dataset) -> Result<()> {
    if dataset.records.iter().any(|r| r.split.is_none()) {
        return Err(Error::data(
            "standardize: split tags must be assigned first",
        ));
    }
    let train_rows: Vec<&[f64]> = dataset
        .records
        .iter()
        .filter(|r| r.split == Some(Split::Train))
        .map(|r| r.features.as_slice())
        .collect();
    let scaler = Scaler::fit(train_rows.iter().copied())?;
    for rec in &mut dataset.records {
        scaler.transform_row(&mut rec.features);
    }
    dataset.scaler = Some(scaler);
    Ok(())
}

/// Read the fixed-schema CSV. Header must contain exactly `patient_id`,
/// the 17 feature columns, and `dr_stage` (any order); empty cells are
/// missing values.
pub fn read_csv(path: &Path) -> Result<Vec<TabularRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let mut col_of: HashMap<String, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if col_of.insert(h.to_string(), i).is_some() {
            return Err(Error::data(format!("duplicate CSV column '{h}'")));
        }
    }
    let mut expected: Vec<&str> = vec!["patient_id", "dr_stage"];
    expected.extend(FEATURE_NAMES);
    for name in &expected {
        if !col_of.contains_key(*name) {
            return Err(Error::data(format!("missing CSV column '{name}'")));
        }
    }
    for h in headers.iter() {
        if !expected.contains(&h) {
            return Err(Error::data(format!("unknown CSV column '{h}'")));
        }
    }

    let parse_cell = |cell: &str, row: usize, col: &str| -> Result<Option<f64>> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::data(format!("row {row}: bad number '{cell}' in '{col}'")))
    };

    let mut out = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row?;
        let patient_id = row
            .get(col_of["patient_id"])
            .unwrap_or_default()
            .trim()
            .to_string();
        let mut features = Vec::with_capacity(NUM_FEATURES);
        for name in FEATURE_NAMES {
            features.push(parse_cell(
                row.get(col_of[name]).unwrap_or_default(),
                row_idx,
                name,
            )?);
        }
        let dr_stage = match parse_cell(row.get(col_of["dr_stage"]).unwrap_or_default(), row_idx, "dr_stage")? {
            None => None,
            Some(v) => {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(Error::data(format!("row {row_idx}: bad dr_stage '{v}'")));
                }
                Some(v as u8)
            }
        };
        out.push(TabularRecord {
            patient_id,
            features,
            dr_stage,
        });
    }
    Ok(out)
}

/// Write records in the fixed schema (canonical column order).
pub fn write_csv(path: &Path, records: &[TabularRecord]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["patient_id".to_string()];
        header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        header.push("dr_stage".to_string());
        writer.write_record(&header)?;
        for rec in records {
            let mut row = vec![rec.patient_id.clone()];
            for f in &rec.features {
                row.push(f.map_or(String::new(), |v| format!("{v}")));
            }
            row.push(rec.dr_stage.map_or(String::new(), |s| s.to_string()));
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    util::atomic_write(path, &buf)
}
