//! Intensity-independent symbolic precomputation for Linear Predictors.
//!
//! The error matrix column for a warp is a sparse linear function of the
//! bounding-box intensities: each warped patch pixel is a bilinear mix of at
//! most four box pixels, minus the pixel's own value. Stacking those
//! coefficient patterns over all training warps gives the tensor `Y`;
//! contracting `Y` with the warp matrix once yields a linear tensor `L`, and
//! contracting `Y` with itself yields a quadratic tensor `Q`. Both depend
//! only on the patch geometry, the warp set, and the box, never on image
//! content, so they are learned once and instantiated per patch with two
//! sparse products.

mod model;
mod tensors;

pub use model::{
    learn_symbolic, learn_symbolic_dct, learn_symbolic_dct_with, load_model, save_model,
    SymbolicModel,
};
pub use tensors::{
    build_linear_tensor, build_quadratic_tensor, instantiate_linear, instantiate_quadratic,
    pair_index, pair_index_decode, LinearEntry, LinearTensor, QuadraticEntry, QuadraticTensor,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::imaging::{extract_rect, BBoxVector, Image, PatchSpec};
use crate::warp::{column_params, AffineParams, WarpRanges};

/// Integer half-extents of the pixel box around the patch center that
/// contains every bilinear-support pixel of every in-range warp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub left: i32,
    pub right: i32,
    pub top: i32,
    pub bottom: i32,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        (self.left + self.right + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.top + self.bottom + 1) as usize
    }

    /// Total enclosed pixel count `l`.
    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major index of an offset inside the box.
    pub fn index_of(&self, dx: i32, dy: i32) -> Option<usize> {
        if dx < -self.left || dx > self.right || dy < -self.top || dy > self.bottom {
            return None;
        }
        Some(((dy + self.top) as usize) * self.width() + (dx + self.left) as usize)
    }

    /// Offset of a row-major index inside the box.
    pub fn offset_of(&self, d: usize) -> (i32, i32) {
        let w = self.width();
        ((d % w) as i32 - self.left, (d / w) as i32 - self.top)
    }
}

/// Computes the bounding box for a patch under all warps inside `ranges`.
///
/// The warped coordinate extremes are found by interval arithmetic over the
/// patch corners; the integer hull is then grown by one pixel of bilinear
/// support. Degenerate all-zero ranges need no support margin: the box is
/// exactly the patch extent.
pub fn compute_bbox(spec: &PatchSpec, ranges: &WarpRanges) -> BoundingBox {
    let half = spec.half() as f64;
    if ranges.lo == [0.0; 6] && ranges.hi == [0.0; 6] {
        let h = spec.half();
        return BoundingBox { left: h, right: h, top: h, bottom: h };
    }

    // x' = (1+p0) x + p1 y + p2, y' = p3 x + (1+p4) y + p5 over the corner
    // set {±half}² and per-parameter intervals.
    let interval = |lo: f64, hi: f64, v: f64| -> (f64, f64) {
        let a = lo * v;
        let b = hi * v;
        (a.min(b), a.max(b))
    };
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &cx in &[-half, half] {
        for &cy in &[-half, half] {
            let (a0, b0) = interval(ranges.lo[0], ranges.hi[0], cx);
            let (a1, b1) = interval(ranges.lo[1], ranges.hi[1], cy);
            x_min = x_min.min(cx + a0 + a1 + ranges.lo[2]);
            x_max = x_max.max(cx + b0 + b1 + ranges.hi[2]);
            let (a3, b3) = interval(ranges.lo[3], ranges.hi[3], cx);
            let (a4, b4) = interval(ranges.lo[4], ranges.hi[4], cy);
            y_min = y_min.min(cy + a3 + a4 + ranges.lo[5]);
            y_max = y_max.max(cy + b3 + b4 + ranges.hi[5]);
        }
    }

    BoundingBox {
        left: (-x_min.floor() as i32) + 1,
        right: (x_max.ceil() as i32) + 1,
        top: (-y_min.floor() as i32) + 1,
        bottom: (y_max.ceil() as i32) + 1,
    }
}

/// Extracts the bounding-box intensity vector around a center pixel.
pub fn extract_bbox(img: &Image, center: (i32, i32), bbox: &BoundingBox) -> Result<BBoxVector> {
    extract_rect(img, center, bbox.left, bbox.right, bbox.top, bbox.bottom)
}

/// Sparse warp coefficient matrix: row `b` holds the bilinear coefficients
/// of patch pixel `b`'s warped location over bounding-box pixels. Zero
/// weights are dropped, so the identity warp has exactly one entry of 1.0
/// per row and every row sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpCoefficientMatrix {
    /// Per patch pixel: (box index, coefficient), sorted by box index.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub num_box_pixels: usize,
}

impl WarpCoefficientMatrix {
    /// Applies the matrix to a box intensity vector, yielding the warped
    /// template samples.
    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.num_box_pixels {
            return Err(Error::DimensionMismatch { expected: self.num_box_pixels, got: u.len() });
        }
        Ok(DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(d, w)| w * u[d as usize]).sum()),
        ))
    }
}

/// Builds the warp coefficient matrix of one warp over a bounding box.
///
/// The weight computation mirrors `bilinear_sample` exactly, so applying the
/// matrix to box intensities reproduces bilinear sampling bit-for-bit (up to
/// summation order).
pub fn build_wcm(
    spec: &PatchSpec,
    params: &AffineParams,
    bbox: &BoundingBox,
) -> Result<WarpCoefficientMatrix> {
    let m = params.to_matrix();
    let mut rows = Vec::with_capacity(spec.len());
    for &(dx, dy) in &spec.offsets() {
        let (wx, wy) = m.apply(dx as f64, dy as f64);
        let ix = wx.floor() as i32;
        let iy = wy.floor() as i32;
        let fx = wx - ix as f64;
        let fy = wy - iy as f64;
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(4);
        for (ox, oy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if w == 0.0 {
                continue;
            }
            let d = bbox.index_of(ix + ox, iy + oy).ok_or_else(|| {
                Error::OutOfBounds(format!(
                    "warped support ({}, {}) outside bounding box; warp outside training ranges?",
                    ix + ox,
                    iy + oy
                ))
            })?;
            row.push((d as u32, w));
        }
        row.sort_by_key(|&(d, _)| d);
        rows.push(row);
    }
    Ok(WarpCoefficientMatrix { rows, num_box_pixels: bbox.len() })
}

/// The intensity-coefficient tensor: per patch pixel `b` and warp `c`, the
/// sparse difference `WCM(dp_c) - WCM(0)` over box pixels. Fibers have at
/// most 5 entries and sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    pub num_patch_pixels: usize,
    pub num_warps: usize,
    pub num_box_pixels: usize,
    /// Per patch pixel, CSR over warps.
    rows: Vec<TensorRow>,
}

#[derive(Debug, Clone, PartialEq)]
struct TensorRow {
    starts: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CoefficientTensor {
    /// The sparse fiber for (patch pixel `b`, warp `c`).
    pub fn fiber(&self, b: usize, c: usize) -> (&[u32], &[f64]) {
        let row = &self.rows[b];
        let (s, e) = (row.starts[c] as usize, row.starts[c + 1] as usize);
        (&row.cols[s..e], &row.vals[s..e])
    }

    /// Applies slice `c` to a box vector: the error-matrix column entry for
    /// each patch pixel.
    pub fn apply_slice(&self, c: usize, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.num_box_pixels {
            return Err(Error::DimensionMismatch { expected: self.num_box_pixels, got: u.len() });
        }
        Ok(DVector::from_iterator(
            self.num_patch_pixels,
            (0..self.num_patch_pixels).map(|b| {
                let (cols, vals) = self.fiber(b, c);
                cols.iter()
                    .zip(vals)
                    .map(|(&d, &v)| v * u[d as usize])
                    .sum()
            }),
        ))
    }
}

/// Builds the coefficient tensor for all columns of a warp matrix.
pub fn build_coefficient_tensor(
    spec: &PatchSpec,
    warps: &DMatrix<f64>,
    bbox: &BoundingBox,
) -> Result<CoefficientTensor> {
    let n = spec.len();
    let m = warps.ncols();
    let wcm0 = build_wcm(spec, &AffineParams::identity(), bbox)?;

    let mut rows: Vec<TensorRow> = (0..n)
        .map(|_| TensorRow {
            starts: Vec::with_capacity(m + 1),
            cols: Vec::new(),
            vals: Vec::new(),
        })
        .collect();
    for row in &mut rows {
        row.starts.push(0);
    }

    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(5);
    for c in 0..m {
        let wcm = build_wcm(spec, &column_params(warps, c), bbox)?;
        for b in 0..n {
            merged.clear();
            merged.extend_from_slice(&wcm.rows[b]);
            let identity_d = wcm0.rows[b][0].0;
            match merged.binary_search_by_key(&identity_d, |&(d, _)| d) {
                Ok(i) => {
                    merged[i].1 -= 1.0;
                    if merged[i].1 == 0.0 {
                        merged.remove(i);
                    }
                }
                Err(i) => merged.insert(i, (identity_d, -1.0)),
            }
            let row = &mut rows[b];
            for &(d, v) in &merged {
                row.cols.push(d);
                row.vals.push(v);
            }
            row.starts.push(row.cols.len() as u32);
        }
    }

    Ok(CoefficientTensor {
        num_patch_pixels: n,
        num_warps: m,
        num_box_pixels: bbox.len(),
        rows,
    })
}

/// Row-major box indices of the patch pixels themselves (the identity
/// support), used to slice template values out of a box vector.
pub fn identity_indices(spec: &PatchSpec, bbox: &BoundingBox) -> Vec<usize> {
    spec.offsets()
        .iter()
        .map(|&(dx, dy)| bbox.index_of(dx, dy).expect("box contains the patch"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::imaging::sample_warped_patch;
    use crate::lp::build_error_matrix;
    use crate::warp::sample_warps;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec9() -> PatchSpec {
        PatchSpec::dense((40, 40), 9).unwrap()
    }

    #[test]
    fn bbox_zero_ranges_is_patch_extent() {
        let bbox = compute_bbox(&spec9(), &WarpRanges::zero());
        assert_eq!(bbox, BoundingBox { left: 4, right: 4, top: 4, bottom: 4 });
        assert_eq!(bbox.len(), 81);
    }

    #[test]
    fn bbox_translation_only() {
        // ±1 translation on a 9x9 patch: 4 + 1 + 1 bilinear support = 6.
        let ranges = WarpRanges::symmetric(1.0, 0.0).unwrap();
        let bbox = compute_bbox(&spec9(), &ranges);
        assert_eq!(bbox, BoundingBox { left: 6, right: 6, top: 6, bottom: 6 });
        assert_eq!(bbox.len(), 169);
    }

    #[test]
    fn bbox_contains_all_sampled_support() {
        let spec = spec9();
        let ranges = WarpRanges::symmetric(1.0, 0.2).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let warps = sample_warps(&ranges, 100_000, 31);
        for c in 0..warps.ncols() {
            let m = column_params(&warps, c).to_matrix();
            for &(dx, dy) in &spec.offsets() {
                let (wx, wy) = m.apply(dx as f64, dy as f64);
                let (ix, iy) = (wx.floor() as i32, wy.floor() as i32);
                assert!(
                    bbox.index_of(ix, iy).is_some() && bbox.index_of(ix + 1, iy + 1).is_some(),
                    "support of ({wx}, {wy}) escapes the box"
                );
            }
        }
    }

    #[test]
    fn bbox_indexing_roundtrip() {
        let bbox = BoundingBox { left: 3, right: 5, top: 2, bottom: 4 };
        for d in 0..bbox.len() {
            let (dx, dy) = bbox.offset_of(d);
            assert_eq!(bbox.index_of(dx, dy), Some(d));
        }
        assert_eq!(bbox.index_of(-4, 0), None);
    }

    #[test]
    fn wcm_identity_rows() {
        let spec = spec9();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(0.5, 0.1).unwrap());
        let wcm = build_wcm(&spec, &AffineParams::identity(), &bbox).unwrap();
        for row in &wcm.rows {
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].1, 1.0);
        }
    }

    #[test]
    fn wcm_half_pixel_translation() {
        let spec = spec9();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(0.5, 0.0).unwrap());
        let wcm = build_wcm(&spec, &AffineParams::translation(0.5, 0.0), &bbox).unwrap();
        for row in &wcm.rows {
            assert_eq!(row.len(), 2);
            assert_eq!(row[0].1, 0.5);
            assert_eq!(row[1].1, 0.5);
        }
    }

    #[test]
    fn wcm_rows_sum_to_one_and_match_sampling() {
        let spec = spec9();
        let ranges = WarpRanges::symmetric(1.0, 0.2).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let img = fixtures::noise(96, 96, 5);
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();

        let warps = sample_warps(&ranges, 20, 77);
        for c in 0..20 {
            let p = column_params(&warps, c);
            let wcm = build_wcm(&spec, &p, &bbox).unwrap();
            for row in &wcm.rows {
                assert!(row.len() <= 4);
                let sum: f64 = row.iter().map(|&(_, w)| w).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
            let via_wcm = wcm.apply(&u).unwrap();
            let direct = sample_warped_patch(&img, spec.center, &spec.offsets(), &p).unwrap();
            assert!((via_wcm - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn wcm_rejects_out_of_range_warp() {
        let spec = spec9();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(0.5, 0.0).unwrap());
        let far = AffineParams::translation(4.0, 0.0);
        assert!(matches!(
            build_wcm(&spec, &far, &bbox),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn tensor_identity_warps_are_zero() {
        let spec = spec9();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(0.5, 0.1).unwrap());
        let warps = DMatrix::zeros(6, 5);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        for b in 0..y.num_patch_pixels {
            for c in 0..5 {
                assert!(y.fiber(b, c).0.is_empty());
            }
        }
    }

    #[test]
    fn tensor_fibers_sum_to_zero_and_kill_constants() {
        let spec = spec9();
        let ranges = WarpRanges::symmetric(1.0, 0.2).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let warps = sample_warps(&ranges, 50, 13);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        for b in 0..y.num_patch_pixels {
            for c in 0..50 {
                let (cols, vals) = y.fiber(b, c);
                assert!(cols.len() <= 5);
                let sum: f64 = vals.iter().sum();
                assert!(sum.abs() < 1e-12);
            }
        }
        let constant = DVector::from_element(bbox.len(), 0.8);
        for c in 0..50 {
            assert!(y.apply_slice(c, &constant).unwrap().amax() < 1e-12);
        }
    }

    #[test]
    fn tensor_reproduces_error_matrix() {
        // The module's central correctness fact: Y·u equals the dense error
        // matrix built by direct sampling.
        let img = fixtures::textured_board(96, 96, 41);
        let spec = spec9();
        let ranges = WarpRanges::symmetric(1.0, 0.2).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let warps = sample_warps(&ranges, 150, 42);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();
        let e = build_error_matrix(&img, &spec, &warps).unwrap();
        for c in 0..150 {
            let col = y.apply_slice(c, &u).unwrap();
            assert!((col - e.column(c)).amax() < 1e-12);
        }
    }

    #[test]
    fn tensor_is_intensity_independent() {
        let spec = spec9();
        let ranges = WarpRanges::symmetric(0.8, 0.15).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let warps = sample_warps(&ranges, 40, 9);
        // No image is ever consulted; building twice gives identical tensors.
        let y1 = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        let y2 = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn identity_indices_select_template() {
        let img = fixtures::noise(64, 64, 3);
        let spec = PatchSpec::dense((32, 32), 7).unwrap();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(1.0, 0.1).unwrap());
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();
        let idx = identity_indices(&spec, &bbox);
        let t0 = crate::imaging::extract_template(&img, &spec).unwrap();
        for (b, &d) in idx.iter().enumerate() {
            assert_eq!(u[d], t0[b]);
        }
    }

    #[test]
    fn random_wcm_equivalence_small_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = PatchSpec::dense((20, 20), 5).unwrap();
        let ranges = WarpRanges::symmetric(0.75, 0.1).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let img = fixtures::noise(48, 48, 12);
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();
        for _ in 0..50 {
            let p = AffineParams([
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.75..0.75),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.75..0.75),
            ]);
            let wcm = build_wcm(&spec, &p, &bbox).unwrap();
            let direct = sample_warped_patch(&img, spec.center, &spec.offsets(), &p).unwrap();
            assert!((wcm.apply(&u).unwrap() - direct).amax() < 1e-12);
        }
    }
}
