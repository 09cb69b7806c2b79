//! Rate-guided training and transport of split autoencoder latents.
//!
//! The crate trains a small feed-forward autoencoder-classifier whose encoder
//! is regularized by a coding-rate-reduction objective, quantizes the latent
//! with entropy-proportional step sizes, serializes it through a lossless
//! range-coded bitstream, and benchmarks the resulting rate-accuracy and
//! robustness trade-offs over a simulated rate-limited channel.
//!
//! Core numerics are generic over the scalar type through [`Scalar`]; the
//! concrete aliases at the crate root ([`Matrix`], [`Matrix32`]) are what the
//! trainer, codec and bench operate on by default.

pub mod augment;
pub mod bench;
pub mod codec;
pub mod error;
pub mod ldr;
pub mod nn;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};

use std::fmt;

/// Floating-point scalar the core numerics are generic over.
///
/// `f64` is the default used by the bench and the file formats; `f32` is
/// available for memory-bound experiments. Conversions to and from `f64`
/// happen once at IO and reporting boundaries.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::NumAssignOps
    + std::iter::Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn to_f64(self) -> f64;
    fn from_f64(x: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

/// Default double-precision matrix used throughout the bench.
pub type Matrix = numerics::Matrix<f64>;
/// Single-precision matrix alias.
pub type Matrix32 = numerics::Matrix<f32>;

pub use numerics::SeededRng;
