//! Numerical core for continual generalized intent discovery (CGID).
//!
//! A joint classifier first learns a set of labeled in-domain classes and
//! then, stage after stage, discovers new classes from unlabeled data while
//! keeping what it already knows. This crate holds everything that does not
//! touch the filesystem: the dense numeric substrate, synthetic corpora and
//! staged splits, clustering and assignment, the prototype-guided learner
//! with replay and feature distillation, the three baselines, the evaluation
//! metrics, and the staged experiment runner.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod cluster;
pub mod data;
mod error;
pub mod experiment;
pub(crate) mod math;
pub mod metrics;
pub mod numeric;
pub mod plrd;
pub mod rng;

pub use error::{Error, Result};
pub use numeric::matrix::DenseMatrix;
