//! Reduction, geometry and invariant-measure toolkit for generalized Chaplygin systems.
//!
//! Everything here is `no_std` with `alloc`. Fields depending on base
//! coordinates are expression trees evaluated over [`dual::Scalar`], so every
//! derivative in the pipeline is exact forward-mode differentiation.

#![no_std]

extern crate alloc;

pub mod catalog;
pub mod chaplygin;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod geom;
pub mod linalg;
pub mod measure;
pub mod reconstruction;

pub use error::{Error, Result};
