mod combinatorics;
pub mod error;
pub mod fixtures;
pub mod masking;
pub mod metrics;
pub mod objectives;
pub mod pipeline;
pub mod selection;
pub mod separator;
pub mod signal;

pub use error::{Error, Result};
