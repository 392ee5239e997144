//! Cross-domain few-shot classification with orthogonal-projection
//! ensembles, batch spectral regularization, support/unlabeled data
//! blending and label-propagation refinement.
//!
//! Module map:
//!
//! - [`linalg`]: dense matrices, Jacobi eigensolver, seeded RNG.
//! - [`nn`]: MLP backbone, classifier head, losses, gradients, SGD.
//! - [`ensemble`]: orthogonal bases, branch training, probability averaging.
//! - [`episodic`]: datasets, episode sampling, blending, fine-tuning,
//!   synthetic domain-shift generator.
//! - [`labelprop`]: KNN graph and label propagation.
//! - [`harness`]: episodic evaluation, accuracy/CI aggregation, reports.
//! - [`par`]: rayon fan-out with a sequential fallback.

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod episodic;
mod error;
pub mod fsio;
pub mod harness;
pub mod labelprop;
pub mod linalg;
pub mod nn;
pub mod par;

pub use error::{Error, Result};
