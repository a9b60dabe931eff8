//! Subpixel patch alignment with learned Linear Predictors.
//!
//! This crate aligns small image patches to subpixel accuracy under a
//! six-parameter affine warp. It provides:
//!
//! - classic energy-based refiners: forward-additive and
//!   inverse-compositional Lucas-Kanade, and efficient second-order
//!   minimization ([`energy`]);
//! - the Linear Predictor family: the closed-form learner, its DCT-reduced,
//!   re-formulated, and hybrid variants, plus run-time prediction ([`lp`]);
//! - symbolic predictor learning: intensity-independent sparse tensors
//!   built once per patch geometry and warp distribution, reused to learn a
//!   predictor for every keypoint at a fraction of the direct cost
//!   ([`symbolic`]);
//! - expected-alignment-error prediction for ranking keypoints by
//!   anticipated accuracy ([`quality`]);
//! - a benchmark harness that reproduces the synthetic accuracy/timing
//!   comparison on any PGM image ([`bench`]).
//!
//! # Quick start
//!
//! ```
//! use subpix::imaging::{PatchSpec, SamplePattern};
//! use subpix::lp::Ridge;
//! use subpix::symbolic::{extract_bbox, learn_symbolic, SymbolicModel};
//! use subpix::warp::WarpRanges;
//!
//! # fn main() -> subpix::Result<()> {
//! // One-off: tensors for a 9x9 patch trained over ±1 px translation and
//! // ±0.2 deformation, from 500 sampled warps.
//! let ranges = WarpRanges::symmetric(1.0, 0.2)?;
//! let model = SymbolicModel::build(9, SamplePattern::Dense, &ranges, 500, 7, None)?;
//!
//! // Per keypoint: slice the bounding box out of the image and learn.
//! let img = subpix::fixtures::textured_board(96, 96, 1);
//! let u = extract_bbox(&img, (48, 48), &model.bbox)?;
//! let predictor = learn_symbolic(&model, &u, Ridge::default_scaled())?;
//! assert_eq!(predictor.matrix.nrows(), 6);
//! # Ok(())
//! # }
//! ```
//!
//! The guide under `book/` walks through the concepts chapter by chapter;
//! its code snippets are compiled as doc-tests of the `subpix-book` crate.

pub mod bench;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod imaging;
pub mod lp;
pub mod quality;
pub mod symbolic;
pub mod warp;

pub use error::{Error, Result};

// Re-exported so downstream code and doc snippets can name matrix types
// without a separate dependency.
pub use nalgebra;
