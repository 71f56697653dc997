//! Dense CPU tensors with tape-based reverse-mode automatic differentiation.
//!
//! The op set is deliberately small: 2-d convolution, nearest-neighbor
//! upsampling, a handful of elementwise maps, reductions, the linear-algebra
//! pieces a spatial attention block needs, group normalization, and the
//! straight-through estimator that lets gradients skip a quantizer. Forward
//! execution is eager and deterministic; any op that produces a non-finite
//! value fails instead of propagating NaNs.

mod attention;
mod element;
mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;

pub use attention::{attention_block, AttentionParams, MAX_ATTENTION_POSITIONS};
pub use element::Element;
pub use error::{Result, TensorError};
pub use graph::{BinaryKind, Gradients, Graph, ReduceKind, TensorId, UnaryKind};
