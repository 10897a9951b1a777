pub mod bids;
pub mod caseio;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod market;
pub mod netmodel;
pub mod settlement;
pub mod solver;

pub use error::{Error, Result};
