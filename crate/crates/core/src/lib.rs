pub mod attention;
pub mod corpus;
pub mod encoder;
mod error;
pub mod extractor;
pub mod features;
pub mod model;
pub mod numerics;
pub mod rouge;
pub mod scaling;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
