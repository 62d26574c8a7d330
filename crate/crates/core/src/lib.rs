//! Lossless compression of BFloat16 tensors.
//!
//! Exponents are Huffman coded, signs and mantissas are kept verbatim, and a
//! small amount of per-thread metadata lets a block-parallel decoder start
//! every thread at a codeword boundary. See `docs/FORMAT.md` for the
//! container layout.

pub mod bf16;
pub mod bits;
pub mod cli;
pub mod container;
pub mod decoder;
pub mod error;
pub mod huffman;
pub mod lut;
pub mod packer;
pub mod safetensors;
pub mod synth;

pub use bf16::{component_stats, Bf16Word, ComponentStats};
pub use decoder::{decompress_group, decompress_parallel, decompress_sequential, exclusive_scan, Decoder};
pub use error::{Error, Result};
pub use huffman::ExponentCodebook;
pub use lut::LutHierarchy;
pub use packer::{compress, CompressionReport, DecodeGeometry, Df11Tensor};
pub use container::{encode_container, write_container, ContainerReader, ContainerSpec, NamedTensor, SourceKind};
