//! Synthetic dataset generator.
//!
//! Produces a desk-scale stand-in for a real fundus dataset: 17 tabular
//! features with the four model-selected ones correlated to the DR stage,
//! class-separated Gaussian image embeddings, and small synthetic fundus
//! images. Class centers are fixed constants; the seed only drives the
//! per-sample draws, so two different seeds give independent samples of the
//! same population.

use rand::Rng;

use crate::data::dataset::{feature_index, TabularRecord, NUM_FEATURES};
use crate::data::embed::{EmbeddingFile, IMAGE_EMBED_DIM};
use crate::error::Result;
use crate::perturb::Image;
use crate::rng::{self, next_gaussian};

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub seed: u64,
    /// Approximate distance between class centers in embedding space.
    pub class_separation: f64,
    pub noise_sigma: f64,
    /// Fraction of dm_time / educational_level cells blanked out.
    pub missing_rate: f64,
    /// Side length of generated images; 0 skips image generation.
    pub image_side: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 128,
            seed: 0,
            class_separation: 10.0,
            noise_sigma: 1.0,
            missing_rate: 0.01,
            image_side: 64,
        }
    }
}

pub struct SynthOutput {
    /// Raw records in row order (ids follow row numbers after cleaning).
    pub records: Vec<TabularRecord>,
    pub embeddings: EmbeddingFile,
    /// (sample id, image) pairs; empty when `image_side` is 0.
    pub images: Vec<(String, Image)>,
}

/// Fixed unit-norm center for one class; independent of the run seed.
fn class_direction(class: usize, dim: usize) -> Vec<f64> {
    let mut rng = rng::stream(0x5eed_c1a5, &format!("class-mean/{class}"));
    let mut v: Vec<f64> = (0..dim).map(|_| next_gaussian(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn bernoulli(rng: &mut impl Rng, p: f64) -> f64 {
    if rng.gen_range(0.0..1.0) < p {
        1.0
    } else {
        0.0
    }
}

fn tabular_row(class: usize, rng: &mut impl Rng) -> Vec<Option<f64>> {
    let c = class as f64;
    let mut row = vec![None; NUM_FEATURES];
    let mut put = |name: &str, v: f64| row[feature_index(name).unwrap()] = Some(v);

    // The four selected features carry the class signal.
    put("age", (45.0 + 6.0 * c + 4.0 * next_gaussian(rng)).round());
    put("sex", bernoulli(rng, 0.35 + 0.07 * c));
    put("dm_time", (2.0 + 2.5 * c + 1.5 * next_gaussian(rng)).max(0.0));
    put(
        "educational_level",
        (4.0 - 0.7 * c + 0.9 * next_gaussian(rng)).round().clamp(0.0, 5.0),
    );

    let insulin = bernoulli(rng, 0.4);
    put("insulin", insulin);
    put(
        "insulin_time",
        if insulin == 1.0 {
            1.5 + 2.0 * next_gaussian(rng).abs()
        } else {
            0.0
        },
    );
    put("oraltreatment_dm", bernoulli(rng, 0.7));
    put("systemic_hypertension", bernoulli(rng, 0.5));
    put("insurance", bernoulli(rng, 0.6));
    put("alcohol_consumption", bernoulli(rng, 0.3));
    put("smoking", bernoulli(rng, 0.2));
    put("obesity", bernoulli(rng, 0.35));
    put("vascular_disease", bernoulli(rng, 0.1));
    put("acute_myocardial_infarction", bernoulli(rng, 0.05));
    put("nephropathy", bernoulli(rng, 0.12));
    put("neuropathy", bernoulli(rng, 0.15));
    put("diabetic_foot", bernoulli(rng, 0.05));
    row
}

/// Synthetic fundus-like frame: dark background, bright disc, class-dependent
/// tint, `class` count of lesion-like spots, plus pixel noise.
fn synth_image(class: usize, side: usize, rng: &mut impl Rng) -> Image {
    let c = class as f64;
    let center = (side - 1) as f64 / 2.0;
    let disc_r = 0.42 * side as f64;
    let base = [
        (0.55 + 0.05 * c).min(1.0),
        (0.38 - 0.04 * c).max(0.05),
        0.15 + 0.02 * c,
    ];
    let n_spots = class * 3;
    let spots: Vec<(f64, f64, f64)> = (0..n_spots)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = rng.gen_range(0.0..disc_r * 0.8);
            (
                center + radius * angle.cos(),
                center + radius * angle.sin(),
                rng.gen_range(0.15..0.45),
            )
        })
        .collect();
    let spot_r2 = (side as f64 / 16.0).powi(2);

    let mut img = Image::new(side, side).expect("side > 0");
    for y in 0..side {
        for x in 0..side {
            let d2 = (x as f64 - center).powi(2) + (y as f64 - center).powi(2);
            let inside = d2 <= disc_r * disc_r;
            for ch in 0..3 {
                let mut v = if inside { base[ch] } else { 0.02 };
                if inside {
                    for (sx, sy, gain) in &spots {
                        let sd2 = (x as f64 - sx).powi(2) + (y as f64 - sy).powi(2);
                        if sd2 < spot_r2 {
                            v += gain * (1.0 - sd2 / spot_r2);
                        }
                    }
                }
                v += 0.03 * next_gaussian(rng);
                img.set(x, y, ch, v.clamp(0.0, 1.0));
            }
        }
    }
    img
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    let n = cfg.n_per_class * NUM_CLASSES;
    let dim = IMAGE_EMBED_DIM;
    let centers: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|c| {
            let dir = class_direction(c, dim);
            let scale = cfg.class_separation / std::f64::consts::SQRT_2;
            dir.into_iter().map(|v| v * scale).collect()
        })
        .collect();

    let mut tab_rng = rng::stream(cfg.seed, "synth/tabular");
    let mut emb_rng = rng::stream(cfg.seed, "synth/embed");
    let mut img_rng = rng::stream(cfg.seed, "synth/image");
    let mut miss_rng = rng::stream(cfg.seed, "synth/missing");

    let mut records = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let mut images = Vec::new();

    let dm_time = feature_index("dm_time").unwrap();
    let edu = feature_index("educational_level").unwrap();

    let mut row = 0usize;
    for class in 0..NUM_CLASSES {
        for i in 0..cfg.n_per_class {
            let sample_id = format!("s{row:05}");
            let mut features = tabular_row(class, &mut tab_rng);
            if cfg.missing_rate > 0.0 {
                if miss_rng.gen_range(0.0..1.0) < cfg.missing_rate {
                    features[dm_time] = None;
                }
                if miss_rng.gen_range(0.0..1.0) < cfg.missing_rate {
                    features[edu] = None;
                }
            }
            records.push(TabularRecord {
                patient_id: format!("p{class}{:04}", i / 4),
                features,
                dr_stage: Some(class as u8),
            });
            for (k, center) in centers[class].iter().enumerate() {
                let _ = k;
                data.push((center + cfg.noise_sigma * next_gaussian(&mut emb_rng)) as f32);
            }
            if cfg.image_side > 0 {
                images.push((sample_id.clone(), synth_image(class, cfg.image_side, &mut img_rng)));
            }
            ids.push(sample_id);
            row += 1;
        }
    }

    Ok(SynthOutput {
        records,
        embeddings: EmbeddingFile::new(dim, ids, data)?,
        images,
    })
}
