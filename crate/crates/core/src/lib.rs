//! Block-based Steered Mixture-of-Experts (SMoE) image coding.
//!
//! Each `B x B` block is modeled as a soft-max gated mixture of `K` radial
//! Gaussian kernels with constant experts. Parameters come either from
//! per-block gradient descent ([`gd`]) or from a trained feed-forward encoder
//! ([`neural`]), are quantized and packed into a `.smoe` stream ([`codec`]),
//! and can be decoded at any resolution ([`eval::resample`]).

pub mod codec;
pub mod error;
pub mod eval;
pub mod gd;
pub mod image;
pub mod model;
pub mod neural;
pub mod ols;
mod optim;
pub mod synth;

pub use error::{Error, ModelFileError, Result, StreamError};
pub use image::{read_pgm, write_pgm, GrayImage};
pub use model::{
    BlockModel, Grid, PixelBlock, DEFAULT_BANDWIDTH, DEFAULT_BLOCK_SIZE, DEFAULT_KERNELS,
};
