//! Image decoding/preprocessing and the low-quality image generator.
//!
//! Quality perturbations emulate the field failure modes of fundus
//! photography: rushed capture (rotation), focus problems (blur), and poor
//! lighting (color jitter). Each image draws from its own RNG stream derived
//! from (seed, sample id), so batches can be processed in any order or in
//! parallel without changing the output.

pub mod image;
mod transforms;

pub use image::{
    center_crop, preprocess, read_ppm, resize_bilinear, write_ppm, Image, IMAGENET_MEAN,
    IMAGENET_STD, INPUT_SIDE,
};
pub use transforms::{color_jitter, gaussian_blur, gaussian_kernel, rotate};

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub struct PerturbConfig {
    /// Rotation drawn uniformly from [-range, +range] degrees.
    pub rotation_range_deg: f64,
    pub blur_kernel: usize,
    /// Blur sigma drawn uniformly from this range.
    pub blur_sigma: (f64, f64),
    /// Jitter factors drawn uniformly from [1-max, 1+max].
    pub jitter_brightness: f64,
    pub jitter_contrast: f64,
    pub jitter_saturation: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            rotation_range_deg: 30.0,
            blur_kernel: 5,
            blur_sigma: (0.1, 2.0),
            jitter_brightness: 0.2,
            jitter_contrast: 0.2,
            jitter_saturation: 0.2,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel % 2 == 0 || self.blur_kernel == 0 {
            return Err(Error::config(format!(
                "blur kernel must be odd, got {}",
                self.blur_kernel
            )));
        }
        if self.rotation_range_deg < 0.0
            || self.blur_sigma.0 < 0.0
            || self.blur_sigma.1 < self.blur_sigma.0
            || self.jitter_brightness < 0.0
            || self.jitter_contrast < 0.0
            || self.jitter_saturation < 0.0
        {
            return Err(Error::config("perturbation ranges must be non-negative"));
        }
        Ok(())
    }
}

/// One input to the generator: sample id, decoded image, DR stage.
pub struct LabeledImage {
    pub sample_id: String,
    pub image: Image,
    pub dr_stage: u8,
}

/// Apply rotation, blur, jitter (in that order) to one image, drawing the
/// magnitudes from the image's own stream.
pub fn perturb_one(image: &Image, sample_id: &str, config: &PerturbConfig) -> Result<Image> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, &format!("perturb/{sample_id}"));
    let angle = if config.rotation_range_deg > 0.0 {
        rng.gen_range(-config.rotation_range_deg..=config.rotation_range_deg)
    } else {
        0.0
    };
    let sigma = if config.blur_sigma.1 > config.blur_sigma.0 {
        rng.gen_range(config.blur_sigma.0..=config.blur_sigma.1)
    } else {
        config.blur_sigma.0
    };
    let draw_factor = |rng: &mut rand_chacha::ChaCha8Rng, max: f64| {
        if max > 0.0 {
            rng.gen_range(1.0 - max..=1.0 + max)
        } else {
            1.0
        }
    };
    let b = draw_factor(&mut rng, config.jitter_brightness);
    let c = draw_factor(&mut rng, config.jitter_contrast);
    let s = draw_factor(&mut rng, config.jitter_saturation);

    let mut out = rotate(image, angle)?;
    if sigma > 0.0 {
        out = gaussian_blur(&out, config.blur_kernel, sigma)?;
    }
    Ok(color_jitter(&out, b, c, s))
}

/// Perturb a class-balanced batch. Counts per DR stage must be equal; output
/// order matches input order and ids are preserved.
pub fn make_adversarial(
    images: &[LabeledImage],
    config: &PerturbConfig,
) -> Result<Vec<(String, Image)>> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::data("no input images"));
    }
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for li in images {
        *counts.entry(li.dr_stage).or_insert(0) += 1;
    }
    let first = *counts.values().next().unwrap();
    if counts.values().any(|&c| c != first) {
        return Err(Error::data(format!(
            "class-imbalanced input: counts {:?}",
            counts.into_iter().collect::<Vec<_>>()
        )));
    }
    images
        .iter()
        .map(|li| Ok((li.sample_id.clone(), perturb_one(&li.image, &li.sample_id, config)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(per_class: usize) -> Vec<LabeledImage> {
        let mut out = Vec::new();
        for class in 0..5u8 {
            for i in 0..per_class {
                let phase = f64::from(class) * 0.13 + i as f64 * 0.07;
                out.push(LabeledImage {
                    sample_id: format!("c{class}i{i}"),
                    image: Image::from_fn(17, 17, |x, y, c| {
                        ((x + 2 * y + c) as f64 * 0.11 + phase).sin().abs() * 0.7
                    })
                    .unwrap(),
                    dr_stage: class,
                });
            }
        }
        out
    }

    #[test]
    fn yields_one_output_per_input() {
        let images = batch(20);
        let out = make_adversarial(&images, &PerturbConfig::default()).unwrap();
        assert_eq!(out.len(), 100);
        for (li, (id, img)) in images.iter().zip(&out) {
            assert_eq!(&li.sample_id, id);
            assert_eq!((img.width, img.height), (17, 17));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let images = batch(2);
        let cfg = PerturbConfig {
            seed: 99,
            ..PerturbConfig::default()
        };
        let a = make_adversarial(&images, &cfg).unwrap();
        let b = make_adversarial(&images, &cfg).unwrap();
        for ((_, ia), (_, ib)) in a.iter().zip(&b) {
            assert_eq!(ia, ib);
        }
    }

    #[test]
    fn output_independent_of_batch_order() {
        let images = batch(2);
        let mut reversed: Vec<LabeledImage> = Vec::new();
        for li in images.iter().rev() {
            reversed.push(LabeledImage {
                sample_id: li.sample_id.clone(),
                image: li.image.clone(),
                dr_stage: li.dr_stage,
            });
        }
        let cfg = PerturbConfig::default();
        let a = make_adversarial(&images, &cfg).unwrap();
        let b = make_adversarial(&reversed, &cfg).unwrap();
        let find = |set: &Vec<(String, Image)>, id: &str| {
            set.iter().find(|(i, _)| i == id).unwrap().1.clone()
        };
        for (id, img) in &a {
            assert_eq!(*img, find(&b, id));
        }
    }

    #[test]
    fn collapsed_config_is_identity() {
        let images = batch(1);
        let cfg = PerturbConfig {
            rotation_range_deg: 0.0,
            blur_sigma: (0.0, 0.0),
            jitter_brightness: 0.0,
            jitter_contrast: 0.0,
            jitter_saturation: 0.0,
            ..PerturbConfig::default()
        };
        let out = make_adversarial(&images, &cfg).unwrap();
        for (li, (_, img)) in images.iter().zip(&out) {
            assert_eq!(li.image, *img);
        }
    }

    #[test]
    fn imbalanced_input_is_rejected() {
        let mut images = batch(2);
        images.pop();
        assert!(make_adversarial(&images, &PerturbConfig::default()).is_err());
    }
}
