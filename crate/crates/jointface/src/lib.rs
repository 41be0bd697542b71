//! A miniature end-to-end engine for joint face detection and facial
//! attribute prediction on procedurally generated scenes.
//!
//! The pipeline: a shared convolutional backbone feeds a face region
//! proposal stage; proposals are RoI-pooled to a fixed grid and passed
//! through fully connected layers into three heads (attributes, face
//! score, bounding-box refinement) trained against a weighted joint loss.
//! Everything runs on a from-scratch `f64` tensor core with tape-based
//! reverse-mode differentiation.

pub mod data;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod roi;
pub mod rpn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// The reproducible RNG used throughout: seeded, portable, streamable.
pub type SeedRng = rand_chacha::ChaCha8Rng;

/// Dedicated substream of a master seed. Streams keep independent RNG
/// consumers (weight init, data order, dropout) from perturbing each other.
pub fn stream_rng(master_seed: u64, stream: u64) -> SeedRng {
    use rand::SeedableRng;
    let mut rng = SeedRng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
