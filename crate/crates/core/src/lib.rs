//! Dense CP decomposition with augmentation-driven self-supervised learning.
//!
//! The crate provides dense tensor storage and the `.dtz` file format, the
//! multilinear kernels behind every closed-form update (Khatri-Rao, MTTKRP,
//! ridge solves), the combined reconstruction / regularization / alignment
//! objective, the stochastic alternating optimizer and its full-batch ALS
//! baseline, signal augmentations with STFT tensorization, and a synthetic
//! evaluation harness.
//!
//! With the default `parallel` feature, MTTKRP rows, Kruskal slices and
//! per-epoch augmentation run on rayon. Each output row is reduced by one
//! worker in a fixed order, so results are bitwise identical with the feature
//! disabled.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod bases;
pub mod error;
pub mod eval;
pub mod io;
pub mod kernels;
pub mod objective;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use bases::{FactorId, KruskalBases};
pub use error::{AtdError, Result};
pub use tensor::{DenseTensor, Matrix, TensorBatch};
