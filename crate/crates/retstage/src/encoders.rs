//! The encoder boundary: pluggable image-embedding sources and the shared
//! tabular projection producing per-feature 512-d tokens.
//!
//! The baseline image encoder is a frozen linear map (bilinear downsample to
//! 16x16x3, then a fixed seeded Gaussian projection 768 -> 512 scaled by
//! 1/sqrt(768)). It exists so the whole pipeline runs without any external
//! model weights; precomputed embedding files plug in behind the same
//! interface for real backbones.

use crate::data::{EmbeddingFile, IMAGE_EMBED_DIM};
use crate::error::{Error, Result};
use crate::nn::{prefixed, LayerNorm, LinearLayer, ParamSlot};
use crate::perturb::{resize_bilinear, Image, INPUT_SIDE};
use crate::rng::{self, next_gaussian};
use crate::tensor::Tensor;

const PATCH_SIDE: usize = 16;
const FLAT_DIM: usize = PATCH_SIDE * PATCH_SIDE * 3;

/// Frozen random-projection encoder for preprocessed images.
pub struct BaselineEncoder {
    seed: u64,
    /// [512 x 768], entries N(0,1)/sqrt(768).
    projection: Vec<f64>,
}

impl BaselineEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng::stream(seed, "baseline-encoder");
        let scale = 1.0 / (FLAT_DIM as f64).sqrt();
        let projection = (0..IMAGE_EMBED_DIM * FLAT_DIM)
            .map(|_| next_gaussian(&mut rng) * scale)
            .collect();
        BaselineEncoder { seed, projection }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encode a preprocessed `[224, 224, 3]` input tensor.
    pub fn encode(&self, input: &Tensor) -> Result<Vec<f64>> {
        if input.shape() != [INPUT_SIDE, INPUT_SIDE, 3] {
            return Err(Error::dim(format!(
                "baseline encoder wants [{INPUT_SIDE}, {INPUT_SIDE}, 3], got {:?}",
                input.shape()
            )));
        }
        // Carry the (possibly negative) normalized values through the image
        // resampler; it never clamps sample values.
        let mut carrier = Image::new(INPUT_SIDE, INPUT_SIDE)?;
        carrier.data_mut().copy_from_slice(input.data());
        let small = resize_bilinear(&carrier, PATCH_SIDE, PATCH_SIDE)?;
        let flat = small.data();
        let mut out = vec![0.0; IMAGE_EMBED_DIM];
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.projection[j * FLAT_DIM..(j + 1) * FLAT_DIM];
            *o = row.iter().zip(flat).map(|(w, v)| w * v).sum();
        }
        Ok(out)
    }
}

/// Where image embeddings come from.
pub enum ImageEncoder {
    Precomputed(EmbeddingFile),
    Baseline(BaselineEncoder),
}

impl ImageEncoder {
    pub fn precomputed(file: EmbeddingFile) -> Result<Self> {
        if file.cols() != IMAGE_EMBED_DIM {
            return Err(Error::dim(format!(
                "precomputed embeddings must have {IMAGE_EMBED_DIM} cols, got {}",
                file.cols()
            )));
        }
        Ok(ImageEncoder::Precomputed(file))
    }

    pub fn baseline(seed: u64) -> Self {
        ImageEncoder::Baseline(BaselineEncoder::new(seed))
    }

    /// Look up a precomputed embedding by sample id.
    pub fn encode_id(&self, sample_id: &str) -> Result<Vec<f64>> {
        match self {
            ImageEncoder::Precomputed(file) => Ok(file
                .lookup(sample_id)?
                .iter()
                .map(|&v| f64::from(v))
                .collect()),
            ImageEncoder::Baseline(_) => Err(Error::config(
                "baseline encoder has no id table; pass an image",
            )),
        }
    }

    /// Encode a preprocessed image tensor (baseline variant only).
    pub fn encode_image(&self, input: &Tensor) -> Result<Vec<f64>> {
        match self {
            ImageEncoder::Baseline(enc) => enc.encode(input),
            ImageEncoder::Precomputed(_) => Err(Error::config(
                "precomputed encoder cannot embed raw images; look up by id",
            )),
        }
    }
}

/// Shared per-scalar projection: one Linear(1 -> 512) applied to each of the
/// four selected features, followed by LayerNorm(512).
pub struct TabularProjection {
    pub linear: LinearLayer,
    pub norm: LayerNorm,
}

impl TabularProjection {
    pub fn new(rng: &mut impl rand::Rng) -> Self {
        TabularProjection {
            linear: LinearLayer::new(1, IMAGE_EMBED_DIM, rng),
            norm: LayerNorm::new(IMAGE_EMBED_DIM),
        }
    }

    /// Project a batch of scalar groups. `scalars` is `[n x f]`; the output
    /// stacks tokens row-major as `[(n*f) x 512]`, sample-major.
    pub fn forward(&mut self, scalars: &Tensor) -> Result<Tensor> {
        let n = scalars.rows();
        let f = scalars.cols();
        let column = Tensor::new(vec![n * f, 1], scalars.data().to_vec())?;
        let projected = self.linear.forward(&column)?;
        self.norm.forward(&projected)
    }

    /// Backward through norm and shared linear; returns `[n*f x 1]` scalar
    /// gradients (rarely needed, but completes the contract).
    pub fn backward(&mut self, d_tokens: &Tensor) -> Result<Tensor> {
        let d_projected = self.norm.backward(d_tokens)?;
        self.linear.backward(&d_projected)
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = prefixed("linear", self.linear.param_slots());
        slots.extend(prefixed("norm", self.norm.param_slots()));
        slots
    }

    pub fn zero_grads(&mut self) {
        self.linear.zero_grads();
        self.norm.zero_grads();
    }
}
