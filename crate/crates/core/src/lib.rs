//! Personalized federated recommendation simulator.

pub mod client;
pub mod dataset;
pub mod error;
pub mod math;
pub mod model;
pub mod server;
pub mod sim;

pub use error::{Error, Result};
