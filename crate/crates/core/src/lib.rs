pub mod airsim;
pub mod conic;
pub mod convergence;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod miso;
pub mod model;
pub mod planner;
pub mod privacy;

pub use error::{Error, Result};
