//! Arbitrary-scale single-image super-resolution, built from scratch:
//! dense tensors, a unitary 2-D FFT, reverse-mode autodiff, Fourier-domain
//! feature filtering, frequency/spatial attention, and the training and
//! evaluation tooling around them.
//!
//! Everything computes in `f64` with fixed accumulation order, so a given
//! seed and input reproduce results bit-for-bit. Checkpoints store `f32`.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod coords;
pub mod error;
pub mod eval;
pub mod fcsa;
pub mod fft;
pub mod fim;
pub mod io;
pub mod iisa;
pub mod model;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{CTensor, Tensor};
