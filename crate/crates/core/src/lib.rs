pub mod bench;
pub mod error;
pub mod heads;
pub mod jsonio;
pub mod nn;
pub mod parallel;
pub mod scope;
pub mod synth;

pub use error::{Error, Result};
