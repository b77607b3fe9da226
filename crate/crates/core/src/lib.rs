//! Spatiotemporal data fusion on SPDE Gaussian Markov random fields.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the whole numerical
//! pipeline: sparse symmetric linear algebra, triangulation and projection,
//! finite-element Matérn precisions, temporal precisions, latent Gaussian
//! model assembly and exact-Gaussian inference with hyperparameter
//! integration, posterior prediction, and evaluation/cross-validation.
//!
//! File formats, configuration and the command-line front-end live in the
//! `stfusion` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod eval;
pub mod error;
pub mod mesh;
pub mod mixture;
pub mod model;
mod par;
pub mod predict;
pub mod simulate;
pub mod sparse;
pub mod spde;
pub mod special;
pub mod temporal;

pub use error::{Error, Result};
