//! Per-image JPEG quantization table optimization.
//!
//! A small network is trained on a sample of one image's blocks to emit
//! quantization tables that trade MS-SSIM distortion against an estimated
//! rate. Every candidate produced along the way is encoded as a real baseline
//! JPEG, measured, and kept if it is the smallest in its MS-SSIM bin.

pub mod autodiff;
pub mod codec;
pub mod config;
pub mod error;
pub mod harness;
pub mod image;
pub mod loss;
pub mod qnet;
pub mod report;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
