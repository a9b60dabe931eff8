//! Expected-alignment-error prediction and keypoint ranking.
//!
//! The least-squares residual of a trained predictor collapses to
//! `tr(P P^T) - tr(A (P E^T))`: one term that is intensity-free and one that
//! costs a handful of dot products per keypoint, independent of the number
//! of training warps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Expected squared error of one keypoint's predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub keypoint: u64,
    /// `tr(P P^T) - tr(A (P E^T))`; the predictor's expected residual over
    /// the training warp distribution.
    pub expected_sq_error: f64,
    pub trace_ppt: f64,
    pub trace_a_lin: f64,
}

/// `tr(P P^T)`: the sum of squares of all warp-matrix entries. Intensity
/// independent, computed once per warp set.
pub fn trace_ppt(warps: &DMatrix<f64>) -> f64 {
    warps.iter().map(|v| v * v).sum()
}

/// Evaluates the expected squared error from a predictor and the linear
/// term `P E^T` it was solved against.
///
/// The trace product is accumulated row by row without materializing the
/// 6x6 product. A value below `-1e-6 * tr(P P^T)` indicates mismatched
/// inputs and is reported with a warning rather than clamped.
pub fn expected_sq_error(
    predictor: &DMatrix<f64>,
    lin: &DMatrix<f64>,
    tr_ppt: f64,
    keypoint: u64,
) -> Result<QualityReport> {
    if predictor.nrows() != 6 || lin.nrows() != 6 || predictor.ncols() != lin.ncols() {
        return Err(Error::DimensionMismatch {
            expected: lin.ncols(),
            got: predictor.ncols(),
        });
    }
    // tr(A lin^T-free form): sum_a <row_a(A), row_a(lin)>.
    let trace_a_lin: f64 = (0..6)
        .map(|a| predictor.row(a).dot(&lin.row(a)))
        .sum();
    let expected = tr_ppt - trace_a_lin;
    if expected < -1e-6 * tr_ppt {
        log::warn!(
            "keypoint {keypoint}: expected squared error {expected} is negative; \
             predictor and linear term likely come from different patches"
        );
    }
    Ok(QualityReport {
        keypoint,
        expected_sq_error: expected,
        trace_ppt: tr_ppt,
        trace_a_lin,
    })
}

/// Sorts reports by ascending expected error (stable: ties keep keypoint-id
/// order) and keeps the best `k`.
pub fn rank_keypoints(mut reports: Vec<QualityReport>, k: usize) -> Vec<QualityReport> {
    reports.sort_by(|a, b| {
        a.expected_sq_error
            .partial_cmp(&b.expected_sq_error)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.keypoint.cmp(&b.keypoint))
    });
    reports.truncate(k);
    reports
}
