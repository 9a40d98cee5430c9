#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diag;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod generators;
pub mod geom;
pub mod nn;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use geom::{Cov2, Point, Sample, TaskSpec, Trajectory};
