//! Host-side half of ParasNet: PGM datasets on disk, model files, CSV
//! reports, a rayon executor, the inference benchmark and the `parasnet`
//! command-line tool. All numerics live in `parasnet-core`.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod parallel;
pub mod pgm;
pub mod report;
pub mod store;

pub use error::{Error, Result};
