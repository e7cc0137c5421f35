pub mod alignment;
pub mod corpus;
pub mod counterfactual;
pub mod error;
pub mod fixtures;
pub mod gateway;
pub mod heuristic;
pub mod metrics;
pub mod partition;
pub mod rng;
pub mod saliency;
pub mod text;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use types::*;
