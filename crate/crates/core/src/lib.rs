pub mod casimir;
pub mod config;
pub mod constants;
pub mod dataset;
pub mod error;
pub mod gas;
pub mod materials;
pub mod nn;
pub mod quadrature;
pub mod trap;

pub use error::{Error, ErrorKind, Result};
