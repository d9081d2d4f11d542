//! Numeric core of the ParasNet parasite classifier.
//!
//! Everything in this crate is `no_std` (with `alloc`): dense tensors and the
//! hand-written layer kernels, the 8-layer ParasNet model, the loss/Adam/augment
//! training stack, the procedural scattering-image generator, the SIFT + SVM +
//! naive Bayes baseline, and the evaluation kernels (confusion matrices, exact
//! t-SNE, silhouette, latency statistics). File IO, threading and the CLI live
//! in the `parasnet` companion crate.

#![no_std]
// When any crate in the build links std, its inherent float methods shadow
// `num_traits::Float` and the trait imports below look unused.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adam;
pub mod augment;
pub mod baseline;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod exec;
pub mod image;
pub mod layers;
pub mod math;
pub mod loss;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
pub use model::ParasNet;
pub use tensor::{Real, Tensor};

/// The three target classes, in confusion-matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Others = 0,
    Crypto = 1,
    Giardia = 2,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Others, Class::Crypto, Class::Giardia];
    pub const COUNT: usize = 3;

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Class::Others),
            1 => Ok(Class::Crypto),
            2 => Ok(Class::Giardia),
            _ => Err(Error::InvalidLabel(i)),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Directory / CSV name.
    pub fn name(self) -> &'static str {
        match self {
            Class::Others => "others",
            Class::Crypto => "crypto",
            Class::Giardia => "giardia",
        }
    }
}

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
