//! Minibatch sampling with determinantal point processes for stochastic
//! gradient descent.
//!
//! The pipeline: scale a dataset into `[-1,1]^d`, fit a product Jacobi
//! reference density, build the multivariate orthogonal polynomial ensemble,
//! reweight it by a kernel density estimate of the data, saturate the result
//! into a rank-`p` projection kernel over the items, and sample minibatches
//! from that projection DPP.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dpp;
pub mod error;
pub mod estimators;
pub mod jacobi;
pub mod kde;
pub mod ope;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod sgd;
pub mod experiments;

pub use error::{Error, Result};
pub use par::Execution;
