//! Affine IFS fractal pre-training images.
//!
//! The crate samples contractive iterated function systems whose σ-factor
//! (`Σ σ₁ + 2σ₂` over all maps) lies in the range that yields rich geometry,
//! renders them with the chaos game, and assembles single- and multi-instance
//! training images on the fly from a bounded render cache. Datasets are
//! persisted as compact parameter files (`FIFS`) plus a JSON manifest, never
//! as image archives.
//!
//! Every random decision flows from a [`rng::Stream`] derived from a master
//! seed, so a dataset is fully defined by its codes file and manifest.

pub mod chaos;
pub mod codec;
pub mod error;
pub mod ifs;
pub mod multi;
pub mod render;
pub mod rng;
pub mod sampler;
pub mod stream;
pub mod validate;

pub use error::{Error, Result};
pub use ifs::{AffineMap, IfsCode, Mat2, SvdParams};
