//! Phaedra: a dual-latent discrete tokenizer for 2D scientific fields.
//!
//! The pipeline encodes a field to a latent map, splits it channel-wise into
//! a morphology stream and a scalar amplitude stream, quantizes each with
//! finite scalar quantization, recombines the discrete values with a learned
//! channel mixer, and decodes back to field space. Alongside the tokenizer
//! live the baseline quantizers, synthetic field generators, a desk-scale
//! training loop, and the evaluation metric suite.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod field;
pub mod metrics;
pub mod model;
pub mod quantizer;
pub mod rng;
pub mod trainer;

pub use error::{CoreError, Result};
pub use field::{denormalize, normalize, Field, Stats};
