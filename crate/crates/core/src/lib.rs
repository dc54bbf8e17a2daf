//! Speaker/listener agents that invent discrete codes for multisets of
//! objects, trained directly or through neural iterated learning, together
//! with the metrics used to judge how compositional those codes are.

pub mod agents;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod meanings;
pub mod metrics;
pub mod nil;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
