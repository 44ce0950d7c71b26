pub mod bart;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimands;
pub mod io;
pub mod parametric;
pub mod sampler;
pub mod stats;
pub mod subgroup;
pub mod synth;

pub use error::{Error, Result};
