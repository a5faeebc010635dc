pub mod cli;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kinematics;
pub mod mathcore;
pub mod nn;
pub mod pipeline;
pub mod synthdata;

pub use error::{Error, Result};
