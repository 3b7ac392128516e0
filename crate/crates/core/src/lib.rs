pub mod cli;
pub mod config;
pub mod distributions;
pub mod error;
pub mod estimator;
pub mod gpr;
pub mod hybrid;
pub mod linearization;
pub mod oracle;
mod quadrature;

pub use error::{Error, Result};
