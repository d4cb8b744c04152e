pub mod distributions;
pub mod error;
pub mod femlite;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod pde;
pub mod problems;
pub mod samplers;
pub mod samples;

pub use error::{Error, Result};
