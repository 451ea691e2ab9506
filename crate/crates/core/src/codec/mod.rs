//! Baseline JPEG machinery.

pub mod blocks;
pub mod dct;
pub mod decoder;
pub mod encoder;
pub mod entropy;
pub mod idct_int;
pub mod quant;
pub mod zigzag;

pub use blocks::{CoeffBlock, CoefficientImage};
pub use dct::{forward_dct, inverse_dct};
pub use decoder::{decode_baseline, decode_coefficients, decode_jpeg, DecoderUsed};
pub use encoder::{encode_jpeg, estimated_file_bytes, EncodedJpeg};
pub use entropy::{estimate_size_bits, rle_tokenize, DcPrediction, QuantizedBlocks, Token};
pub use quant::{quantize, QuantTableSet};
pub use zigzag::{inverse_zigzag, zigzag};
