//! Gaussian-process classification of variable-length multivariate sequences
//! with truncated signature covariances.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical piece
//! of the model:
//!
//! - [`sequence`]: sequences, time/lag augmentation, tabulation, subsampling.
//! - [`static_kernel`]: the state-space kernel lifting observations into an RKHS.
//! - [`array`]: the cumulative-sum / shift / slice-sum array toolkit.
//! - [`signature`]: the four signature Gram algorithms (inducing tensors vs
//!   inducing tensors, inducing tensors vs sequences, sequences vs sequences and
//!   sequence variances) with level scalings and per-level normalization.
//! - [`oracle`]: a brute-force reference that materializes signatures by
//!   enumerating increasing multi-indices.
//! - [`svgp`]: whitened sparse variational multiclass classifier.
//! - [`trainer`] and [`optim`]: the phased training loop, Adam and Nadam.
//! - [`dataset`]: dataset container, normalization and synthetic tasks.
//!
//! Every kernel and objective computation is generic over [`Scalar`], which is
//! implemented by `f64` and by the reverse-mode [`autodiff::Var`], so the same
//! code produces values and exact gradients.
#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod array;
pub mod autodiff;
pub mod dataset;
mod error;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod rng;
mod scalar;
pub mod sequence;
pub mod signature;
pub mod static_kernel;
pub mod svgp;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{softplus, softplus_inv, Scalar};
