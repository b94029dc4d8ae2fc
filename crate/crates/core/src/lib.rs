//! Attention-based upsampling as a drop-in replacement for strided transposed
//! convolution.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense `C×H×W` tensors, plain convolution, masked softmax.
//! - [`reference`]: literal loop-level operators. These are the correctness
//!   oracles for everything else and are deliberately unoptimised.
//! - [`autodiff`]: a reverse-mode tape with analytic backward passes and a
//!   central finite-difference checker.
//! - [`fast`]: phase-decomposed kernels that never materialise the
//!   zero-upsampled tensors, plus FLOP formulas and a benchmark harness.
//! - [`models`]: the super-resolution network and the guided joint
//!   upsampling network, with a binary checkpoint format.
//! - [`train`]: Adam, learning-rate schedules, metrics, augmentation,
//!   patching and the training loop.
//! - [`data_io`]: PNG / 16-bit PGM codecs, colour conversion, bicubic
//!   resampling, dataset manifests and synthetic dataset generators.
//!
//! Parallelism comes from rayon behind the `parallel` feature (on by
//! default). Without it every kernel runs sequentially with the same
//! per-element reduction order, so results are bit-identical either way.

pub mod autodiff;
pub mod data_io;
pub mod error;
pub mod fast;
pub mod models;
pub mod par;
pub mod reference;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Real, SeededRng, Tensor};
