//! Distributionally robust offline planning with linear function
//! approximation under KL ambiguity sets.
//!
//! The building blocks are the KL dual solver ([`kl_dual`]), feature maps and
//! environments ([`features`], [`envs`]), offline datasets ([`dataset`]) and
//! the planners in [`algorithms`]. [`oracle`] holds exact tabular references,
//! [`bandit`] the mixture-bandit example and [`experiments`] the
//! config-driven runners used by the command-line tool.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod bandit;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod features;
pub mod kl_dual;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};
