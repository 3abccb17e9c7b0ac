//! Robust PCA for video foreground-background separation, classical and
//! deep-unfolded.
//!
//! The crate decomposes a matrix of vectorized video frames into a low-rank
//! background plus a sparse foreground, either with classical proximal
//! gradient iterations or with unrolled networks whose thresholds, per-pixel
//! weights, and temporal reference projection are learned by a built-in
//! reverse-mode gradient engine. Synthetic data generation, training,
//! evaluation, and binary tensor/dataset persistence round out the toolkit
//! behind the `urpca` command-line interface.

pub mod datagen;
pub mod error;
pub mod io;
pub mod net;
pub mod par;
pub mod prox;
pub mod solvers;
pub mod svd;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use svd::{svd, SvdFactors};
pub use tensor::{conv2d_same, ConvKernel, Geometry, VideoMatrix};
