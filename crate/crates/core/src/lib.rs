//! Cascade-trained, cascade-trimmed super-resolution CNNs.
//!
//! The crate covers the full pipeline on single-channel images: bicubic
//! degradation and patch extraction ([`data`]), a small deterministic
//! convolution engine ([`tensor`]), the `9-5-3-...-3-5` network family
//! ([`model`]), staged training that grows the network two layers at a time
//! ([`train`]), structured filter trimming ([`trim`]) and PSNR/SSIM
//! evaluation ([`data::eval`]).

pub mod data;
pub mod error;
pub mod exec;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod trim;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{Network, Widths};
pub use rng::RngState;
pub use tensor::{Kernel, Tensor4};
