pub mod belief;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod heads;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod run;
pub mod training;

pub use error::{Error, ErrorKind, Result};
