//! Class-incremental continual learning with diagonal-Fisher (EWC-style)
//! regularization and a diagonal natural gradient optimizer.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: dense ReLU classifier, softmax cross-entropy, backprop, head growth.
//! * [`fisher`]: diagonal Fisher information from per-example scores.
//! * [`regularizer`]: importance-weighted quadratic penalty toward task anchors.
//! * [`optimizer`]: SGD and damped diagonal natural gradient steps.
//! * [`data`]: seeded Gaussian blobs and IDX files.
//! * [`harness`]: disjoint-class task streams and the train/evaluate loop.
//! * [`metrics`]: CSV, plot series and arm comparison.

pub mod data;
pub mod error;
pub mod fisher;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod optimizer;
pub mod regularizer;
pub mod rng;

pub use error::{Error, Result};
