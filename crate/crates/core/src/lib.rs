//! Universal random-coding ensemble for d-semifaithful lossy compression.
//!
//! Reproduction codewords are drawn i.i.d. from the universal distribution
//! `U(x̂) ∝ 2^{−LZ(x̂)}`, where `LZ` is a bit-exact LZ78 code length. The
//! crate provides the code itself, exact enumerations of `U` and of its mass
//! on distortion spheres, a seed-shared random-codebook codec, the
//! type-class covering machinery that lower-bounds any such code, and
//! single-letter reference quantities for comparison.

pub mod alphabet;
pub mod bits;
pub mod codec;
pub mod converse;
pub mod distortion;
pub mod empirical;
pub mod error;
pub mod experiments;
pub mod lz78;
pub mod reference;
pub mod stats;
pub mod universal;

pub use alphabet::{Alphabet, Block, DEFAULT_ENUMERATION_CAP};
pub use bits::BitString;
pub use distortion::{DistortionSpec, Rational};
pub use error::{Error, Result};
pub use lz78::LengthMode;
