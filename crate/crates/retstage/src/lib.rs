//! Multimodal diabetic-retinopathy staging pipeline.
//!
//! The crate combines fundus-image embeddings with tabular clinical features
//! to stage diabetic retinopathy (classes 0-4), and trains a contrastive
//! quality model that defers low-quality samples to human review. Everything
//! is deterministic under an explicit seed and runs at desk scale on
//! synthetic or user-supplied data.
//!
//! Main pieces:
//! - [`tensor`] / [`nn`]: dense `f64` tensors, layers with explicit
//!   forward/backward contracts, losses, Adam, plateau scheduling, and a
//!   finite-difference gradient harness.
//! - [`data`]: CSV ingestion, cleaning, standardization, splits/folds,
//!   class weighting, the embedding file format, and a synthetic generator.
//! - [`encoders`]: pluggable image-embedding sources and the shared tabular
//!   projection that turns selected scalars into 512-d tokens.
//! - [`fusion`]: the three fusion strategies (concatenation, fully-connected,
//!   bidirectional cross-attention), the stage classifier, and the tabular
//!   baseline network.
//! - [`perturb`]: PPM image I/O, preprocessing, and the low-quality image
//!   generator (rotation, Gaussian blur, color jitter).
//! - [`deferral`]: the contrastive quality network, its training objective,
//!   and the threshold deferral decision.
//! - [`train`] / [`metrics`]: training loops (including 5-fold
//!   cross-validation) and evaluation (confusion matrix, one-vs-rest AUROC).
//! - [`tsne`]: exact t-SNE for 2-D visualization of embedding spaces.

pub mod checkpoint;
pub mod data;
pub mod encoders;
pub mod deferral;
pub mod error;
pub mod fusion;
pub mod nn;
pub mod metrics;
pub mod perturb;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod tsne;
pub mod util;

pub use error::{Error, Result};
pub use tensor::Tensor;
