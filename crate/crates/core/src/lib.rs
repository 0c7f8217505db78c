//! Robustness bias and per-input-node robustness bias of small feedforward
//! ReLU classifiers under bounded, discretized input noise.
//!
//! The pipeline mirrors a formal-analysis workflow:
//!
//! 1. [`data`]: load or synthesize a labeled dataset, pick features, split,
//!    and optionally truncate the head class until classes are balanced.
//! 2. [`train`]: train single-hidden-layer ReLU networks, one per seed.
//! 3. [`model`]: persist networks and validate them against a test set.
//! 4. [`perturb`]: count, exactly, the offsets of a nested noise grid under
//!    which a correctly classified input keeps its label.
//! 5. [`analysis`]: average those counts into class-wise and per-node
//!    curves, bias scores and regime comparisons.
//! 6. [`report`]: the staged experiment driver behind the `nodebias` binary.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod perturb;
pub mod report;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
