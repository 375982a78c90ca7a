pub mod concentration;
pub mod dsm;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
