//! Planning and validation toolkit for randomized security screening.
//!
//! - [`mixer`]: detection and delay of random practice mixes, the efficient
//!   frontier, and the best mix under a throughput budget.
//! - [`simulator`]: seeded discrete-event simulation of screening lanes.
//! - [`schemes`]: executable selection mechanisms and how exploitable they are.
//! - [`estimators`]: random re-check coverage, re-screening and covert-test estimates.

pub mod error;
pub mod estimators;
pub mod mixer;
pub mod model;
pub mod rng;
pub mod schemes;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use model::{effective_detection, validate_practice, MixPlan, Practice, ServiceShape, ServiceTimeModel};
pub use rng::{Purpose, RngContract};
pub use stats::EstimateWithInterval;
