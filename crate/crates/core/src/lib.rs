//! Robust invertible-network image hiding.
//!
//! A host image and a secret image are moved to the Haar wavelet domain and
//! pushed through a stack of affine coupling blocks; the host branch becomes
//! the container and the secret branch is discarded. Extraction runs the
//! blocks backwards from the (possibly attacked) container and a fresh
//! Gaussian latent, optionally wrapped by pre- and post-enhancement networks.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! files, images on disk or the command line lives in the `pris` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bitpack;
pub mod conv;
pub mod distortion;
pub mod enhance;
pub mod error;
pub mod eval;
pub mod exec;
pub mod graph;
pub mod inn;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
