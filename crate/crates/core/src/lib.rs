//! Dense upsampling convolution (DUC) decoders, hybrid dilated convolution
//! (HDC) schedule analysis, and the from-scratch convolution engine and toy
//! segmentation trainer built on top of them.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the `duc-hdc` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conv;
pub mod error;
pub mod hdc;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod upsample;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Shape, Tensor};
