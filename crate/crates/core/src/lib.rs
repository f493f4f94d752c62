pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod polsar;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
