//! Logic tensor networks with prototype-based class membership.
//!
//! A differentiable first-order fuzzy logic engine where classification is the
//! satisfiability of a two-formula knowledge base. The `isOfClass` predicate is
//! `exp(-alpha * d^2)` between an instance embedding and a class prototype, so
//! prototypes live in the same space as the instances they classify.
//!
//! Layout, bottom-up:
//!
//! - [`diffcore`]: dense `f64` tensors on a reverse-mode tape, gradient checking,
//!   truncated-normal initialisation.
//! - [`realogic`]: negation, the product p-mean and generalized mean aggregators,
//!   diagonal guarded quantification.
//! - [`grounding`]: `getEmbedding`, `getPrototypes` (few-shot and zero-shot forms),
//!   `isOfClass` and its parametric variant.
//! - [`kb`]: the knowledge base `{phi_aff, phi_neg}`, episode loss, regularised
//!   best-satisfiability objective.
//! - [`trainer`]: episode sampling, Adam, GZSL and FSL training loops, checkpoints.
//! - [`metrics`]: nearest-prototype prediction and GZSL metrics.
//! - [`datasets`]: CSV loader, synthetic generator, split validation.
//! - [`cli`]: the `proto-ltn` command line.
//!
//! See the crate's `examples/` directory for one runnable program per capability.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datasets;
pub mod diffcore;
pub mod error;
pub mod gradsuite;
pub mod grounding;
pub mod kb;
pub mod metrics;
pub mod realogic;
pub mod trainer;

pub use error::{Error, Result};
