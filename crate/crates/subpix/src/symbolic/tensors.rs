//! Sparse linear and quadratic tensors contracted from the coefficient
//! tensor, and their per-patch instantiation.
//!
//! Contraction entries below `PRUNE_EPS` in magnitude are accumulation
//! noise from cancelling bilinear weights and are dropped.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::CoefficientTensor;
use crate::error::{Error, Result};

const PRUNE_EPS: f64 = 1e-14;

/// One entry of the linear tensor: `value` contributes to `(P E^T)[a, b]`
/// when multiplied by box intensity `u[d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEntry {
    pub a: u8,
    pub b: u16,
    pub d: u32,
    pub value: f64,
}

/// Sparse 6 x n x l tensor: the warp matrix contracted against the
/// coefficient tensor over the warp index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTensor {
    pub num_patch_pixels: usize,
    pub num_box_pixels: usize,
    pub entries: Vec<LinearEntry>,
}

/// One entry of the quadratic tensor, keyed by the unordered box-pixel pair
/// `(d1 <= d2)`; off-diagonal coefficients carry both orderings folded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticEntry {
    pub b1: u16,
    pub b2: u16,
    pub d1: u32,
    pub d2: u32,
    pub value: f64,
}

/// Sparse symmetric tensor reconstructing `E E^T`; only `b1 <= b2` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTensor {
    pub num_patch_pixels: usize,
    pub num_box_pixels: usize,
    pub entries: Vec<QuadraticEntry>,
}

/// Upper-triangular row-major index of an unordered pair `d1 <= d2` among
/// `l` box pixels: `e = d1 l - d1 (d1 - 1) / 2 + (d2 - d1)`.
pub fn pair_index(d1: u64, d2: u64, l: u64) -> u64 {
    debug_assert!(d1 <= d2 && d2 < l);
    d1 * (2 * l - d1 + 1) / 2 + (d2 - d1)
}

/// Inverse of [`pair_index`].
pub fn pair_index_decode(e: u64, l: u64) -> (u64, u64) {
    // Row starts are monotone; scan is fine for header validation, but a
    // closed form keeps decoding O(1): solve d1 from the triangular count.
    let mut d1 = ((2.0 * l as f64 + 1.0
        - ((2.0 * l as f64 + 1.0).powi(2) - 8.0 * e as f64).sqrt())
        / 2.0)
        .floor() as u64;
    // Guard against floating-point boundary drift.
    while d1 > 0 && pair_index(d1, d1, l) > e {
        d1 -= 1;
    }
    while d1 + 1 < l && pair_index(d1 + 1, d1 + 1, l) <= e {
        d1 += 1;
    }
    let d2 = d1 + (e - pair_index(d1, d1, l));
    (d1, d2)
}

/// Contracts the warp matrix against the coefficient tensor over warps:
/// `L[a, b, d] = sum_c P[a, c] Y[b, c, d]`.
pub fn build_linear_tensor(warps: &DMatrix<f64>, y: &CoefficientTensor) -> LinearTensor {
    assert_eq!(warps.ncols(), y.num_warps, "warp count mismatch");
    let l = y.num_box_pixels;
    let per_pixel: Vec<Vec<LinearEntry>> = (0..y.num_patch_pixels)
        .into_par_iter()
        .map(|b| {
            let mut scratch = vec![[0.0f64; 6]; l];
            let mut touched: Vec<u32> = Vec::new();
            for c in 0..y.num_warps {
                let (cols, vals) = y.fiber(b, c);
                for (&d, &v) in cols.iter().zip(vals) {
                    let cell = &mut scratch[d as usize];
                    if cell.iter().all(|&x| x == 0.0) {
                        touched.push(d);
                    }
                    for a in 0..6 {
                        cell[a] += warps[(a, c)] * v;
                    }
                }
            }
            touched.sort_unstable();
            touched.dedup();
            let mut out = Vec::new();
            for &d in &touched {
                for (a, &v) in scratch[d as usize].iter().enumerate() {
                    if v.abs() >= PRUNE_EPS {
                        out.push(LinearEntry { a: a as u8, b: b as u16, d, value: v });
                    }
                }
            }
            out
        })
        .collect();

    LinearTensor {
        num_patch_pixels: y.num_patch_pixels,
        num_box_pixels: l,
        entries: per_pixel.into_iter().flatten().collect(),
    }
}

/// Contracts the coefficient tensor against itself over warps:
/// `Q[b1, b2, e(d1, d2)] = sum_c Y[b1, c, d1] Y[b2, c, d2]`, with the two
/// orderings of an off-diagonal pair folded into one entry.
pub fn build_quadratic_tensor(y: &CoefficientTensor) -> QuadraticTensor {
    let n = y.num_patch_pixels;
    let l = y.num_box_pixels;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|b1| (b1..n).map(move |b2| (b1, b2)))
        .collect();

    let per_pair: Vec<Vec<QuadraticEntry>> = pairs
        .par_iter()
        .map_init(
            || (vec![0.0f64; l * l], vec![u32::MAX; l * l], Vec::<u32>::new(), 0u32),
            |(scratch, epoch, touched, generation), &(b1, b2)| {
                *generation = generation.wrapping_add(1);
                touched.clear();
                for c in 0..y.num_warps {
                    let (cols1, vals1) = y.fiber(b1, c);
                    let (cols2, vals2) = y.fiber(b2, c);
                    for (&da, &va) in cols1.iter().zip(vals1) {
                        for (&db, &vb) in cols2.iter().zip(vals2) {
                            let (d1, d2) = if da <= db { (da, db) } else { (db, da) };
                            let idx = d1 as usize * l + d2 as usize;
                            if epoch[idx] != *generation {
                                epoch[idx] = *generation;
                                scratch[idx] = 0.0;
                                touched.push(idx as u32);
                            }
                            scratch[idx] += va * vb;
                        }
                    }
                }
                touched.sort_unstable();
                let mut out = Vec::with_capacity(touched.len());
                for &idx in touched.iter() {
                    let v = scratch[idx as usize];
                    if v.abs() >= PRUNE_EPS {
                        out.push(QuadraticEntry {
                            b1: b1 as u16,
                            b2: b2 as u16,
                            d1: idx / l as u32,
                            d2: idx % l as u32,
                            value: v,
                        });
                    }
                }
                out
            },
        )
        .collect();

    QuadraticTensor {
        num_patch_pixels: n,
        num_box_pixels: l,
        entries: per_pair.into_iter().flatten().collect(),
    }
}

/// Instantiates `P E^T` for one patch: `(P E^T)[a, b] = sum_d L[a, b, d] u[d]`.
pub fn instantiate_linear(tensor: &LinearTensor, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    if u.len() != tensor.num_box_pixels {
        return Err(Error::DimensionMismatch { expected: tensor.num_box_pixels, got: u.len() });
    }
    let mut out = DMatrix::zeros(6, tensor.num_patch_pixels);
    for e in &tensor.entries {
        out[(e.a as usize, e.b as usize)] += e.value * u[e.d as usize];
    }
    Ok(out)
}

/// Instantiates `E E^T` for one patch: a symmetric n x n matrix from the
/// folded pair entries, `sum q u[d1] u[d2]` per `(b1, b2)`.
pub fn instantiate_quadratic(tensor: &QuadraticTensor, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    if u.len() != tensor.num_box_pixels {
        return Err(Error::DimensionMismatch { expected: tensor.num_box_pixels, got: u.len() });
    }
    let n = tensor.num_patch_pixels;
    let mut out = DMatrix::zeros(n, n);
    for e in &tensor.entries {
        out[(e.b1 as usize, e.b2 as usize)] += e.value * u[e.d1 as usize] * u[e.d2 as usize];
    }
    for b1 in 0..n {
        for b2 in b1 + 1..n {
            out[(b2, b1)] = out[(b1, b2)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::imaging::PatchSpec;
    use crate::lp::build_error_matrix;
    use crate::symbolic::{build_coefficient_tensor, compute_bbox, extract_bbox};
    use crate::warp::{sample_warps, WarpRanges};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Tiny instance shared by the oracle tests: 3x3 dense patch (n = 9),
    /// small ranges (l = 49), a handful of warps.
    fn tiny() -> (PatchSpec, DMatrix<f64>, super::super::BoundingBox, CoefficientTensor) {
        let spec = PatchSpec::dense((24, 24), 3).unwrap();
        let ranges = WarpRanges::symmetric(0.5, 0.05).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        assert!(bbox.len() <= 49);
        let warps = sample_warps(&ranges, 60, 17);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        (spec, warps, bbox, y)
    }

    #[test]
    fn pair_index_roundtrip() {
        for l in [1u64, 2, 7, 49, 169] {
            let mut e = 0u64;
            for d1 in 0..l {
                for d2 in d1..l {
                    assert_eq!(pair_index(d1, d2, l), e);
                    assert_eq!(pair_index_decode(e, l), (d1, d2));
                    e += 1;
                }
            }
            assert_eq!(e, l * (l + 1) / 2);
        }
    }

    #[test]
    fn zero_tensor_yields_zero_contractions() {
        let spec = PatchSpec::dense((24, 24), 3).unwrap();
        let bbox = compute_bbox(&spec, &WarpRanges::symmetric(0.5, 0.0).unwrap());
        let warps = DMatrix::zeros(6, 10);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        assert!(build_linear_tensor(&warps, &y).entries.is_empty());
        assert!(build_quadratic_tensor(&y).entries.is_empty());
    }

    #[test]
    fn linear_tensor_single_warp_is_outer_product() {
        // With m = 1 the contraction is P[a, 0] * Y[b, 0, d].
        let spec = PatchSpec::dense((24, 24), 3).unwrap();
        let ranges = WarpRanges::symmetric(0.5, 0.05).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let warps = sample_warps(&ranges, 1, 3);
        let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
        let lt = build_linear_tensor(&warps, &y);
        for e in &lt.entries {
            let (cols, vals) = y.fiber(e.b as usize, 0);
            let yv = cols
                .iter()
                .zip(vals)
                .find(|(&d, _)| d == e.d)
                .map(|(_, &v)| v)
                .unwrap();
            let want = warps[(e.a as usize, 0)] * yv;
            assert!((e.value - want).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_tensor_matches_dense_loop_oracle() {
        let (_, warps, bbox, y) = tiny();
        let lt = build_linear_tensor(&warps, &y);

        // Dense brute-force: expand Y and contract with a triple loop.
        let (n, m, l) = (y.num_patch_pixels, y.num_warps, bbox.len());
        let mut dense_y = vec![0.0f64; n * m * l];
        for b in 0..n {
            for c in 0..m {
                let (cols, vals) = y.fiber(b, c);
                for (&d, &v) in cols.iter().zip(vals) {
                    dense_y[(b * m + c) * l + d as usize] = v;
                }
            }
        }
        let mut dense_l = vec![0.0f64; 6 * n * l];
        for a in 0..6 {
            for b in 0..n {
                for d in 0..l {
                    let mut acc = 0.0;
                    for c in 0..m {
                        acc += warps[(a, c)] * dense_y[(b * m + c) * l + d];
                    }
                    dense_l[(a * n + b) * l + d] = acc;
                }
            }
        }
        let mut sparse_as_dense = vec![0.0f64; 6 * n * l];
        for e in &lt.entries {
            sparse_as_dense[(e.a as usize * n + e.b as usize) * l + e.d as usize] = e.value;
        }
        for (i, (&s, &d)) in sparse_as_dense.iter().zip(&dense_l).enumerate() {
            assert!((s - d).abs() < 1e-12, "entry {i}: {s} vs {d}");
        }
    }

    #[test]
    fn quadratic_fold_hand_case() {
        // One warp, one patch pixel, fiber (a at d1, -a at d2): diagonal
        // entries a^2, folded pair entry -2 a^2.
        let (_, _, _, mut y) = tiny();
        // Rebuild by hand: a minimal tensor with one fiber.
        y = CoefficientTensor {
            num_patch_pixels: 1,
            num_warps: 1,
            num_box_pixels: 8,
            rows: vec![super::super::TensorRow {
                starts: vec![0, 2],
                cols: vec![2, 5],
                vals: vec![0.3, -0.3],
            }],
        };
        let q = build_quadratic_tensor(&y);
        assert_eq!(q.entries.len(), 3);
        let get = |d1: u32, d2: u32| -> f64 {
            q.entries
                .iter()
                .find(|e| e.d1 == d1 && e.d2 == d2)
                .map(|e| e.value)
                .unwrap()
        };
        assert!((get(2, 2) - 0.09).abs() < 1e-15);
        assert!((get(5, 5) - 0.09).abs() < 1e-15);
        assert!((get(2, 5) + 2.0 * 0.09).abs() < 1e-15);
    }

    #[test]
    fn instantiations_match_dense_error_matrix() {
        let (spec, warps, bbox, y) = tiny();
        let lt = build_linear_tensor(&warps, &y);
        let qt = build_quadratic_tensor(&y);

        let img = fixtures::textured_board(48, 48, 23);
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();
        let e = build_error_matrix(&img, &spec, &warps).unwrap();

        let lin = instantiate_linear(&lt, &u).unwrap();
        let want_lin = &warps * e.transpose();
        assert!((lin - want_lin).amax() < 1e-10);

        let quad = instantiate_quadratic(&qt, &u).unwrap();
        let want_quad = &e * e.transpose();
        assert!((&quad - want_quad).amax() < 1e-10);
        assert_eq!(quad.clone(), quad.transpose());
    }

    #[test]
    fn instantiation_trivia() {
        let (_, warps, bbox, y) = tiny();
        let lt = build_linear_tensor(&warps, &y);
        let qt = build_quadratic_tensor(&y);
        let zero = DVector::zeros(bbox.len());
        assert!(instantiate_linear(&lt, &zero).unwrap().amax() == 0.0);
        assert!(instantiate_quadratic(&qt, &zero).unwrap().amax() == 0.0);

        // Constant intensities are annihilated by the zero-sum fibers.
        let constant = DVector::from_element(bbox.len(), 0.4);
        assert!(instantiate_linear(&lt, &constant).unwrap().amax() < 1e-12);

        let wrong = DVector::zeros(bbox.len() + 1);
        assert!(instantiate_linear(&lt, &wrong).is_err());
        assert!(instantiate_quadratic(&qt, &wrong).is_err());
    }

    #[test]
    fn instantiation_scale_equivariance() {
        let (spec, warps, bbox, y) = tiny();
        let lt = build_linear_tensor(&warps, &y);
        let qt = build_quadratic_tensor(&y);
        let img = fixtures::noise(48, 48, 29);
        let u = extract_bbox(&img, spec.center, &bbox).unwrap();
        let alpha = 0.37;

        let lin_scaled = instantiate_linear(&lt, &(&u * alpha)).unwrap();
        let lin = instantiate_linear(&lt, &u).unwrap() * alpha;
        assert!((lin_scaled - lin).amax() < 1e-12);

        let quad_scaled = instantiate_quadratic(&qt, &(&u * alpha)).unwrap();
        let quad = instantiate_quadratic(&qt, &u).unwrap() * (alpha * alpha);
        assert!((quad_scaled - quad).amax() < 1e-12);
    }

    #[test]
    fn sparsity_bounds() {
        let (_, warps, bbox, y) = tiny();
        let lt = build_linear_tensor(&warps, &y);
        let distinct_d: std::collections::BTreeSet<u32> =
            lt.entries.iter().map(|e| e.d).collect();
        assert!(distinct_d.len() <= bbox.len());
        let _ = warps;
    }

    #[test]
    fn instantiation_cost_is_independent_of_m() {
        // Same spec, tensors prebuilt at m = 400 and m = 4000: entry counts
        // (the per-patch instantiation work) stay within 1.5x.
        let spec = PatchSpec::dense((24, 24), 5).unwrap();
        let ranges = WarpRanges::symmetric(0.5, 0.1).unwrap();
        let bbox = compute_bbox(&spec, &ranges);
        let counts: Vec<usize> = [400usize, 4000]
            .iter()
            .map(|&m| {
                let warps = sample_warps(&ranges, m, 51);
                let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
                build_quadratic_tensor(&y).entries.len()
            })
            .collect();
        let ratio = counts[1] as f64 / counts[0] as f64;
        assert!(ratio < 1.5, "entry count grew {ratio}x from m=400 to m=4000");
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..5 {
            let side = [3u32, 5][trial % 2];
            let spec = PatchSpec::dense((24, 24), side).unwrap();
            let t = rng.random_range(0.2..0.6);
            let s = rng.random_range(0.02..0.1);
            let ranges = WarpRanges::symmetric(t, s).unwrap();
            let bbox = compute_bbox(&spec, &ranges);
            let m = rng.random_range(20..100);
            let warps = sample_warps(&ranges, m, 100 + trial as u64);
            let y = build_coefficient_tensor(&spec, &warps, &bbox).unwrap();
            let lt = build_linear_tensor(&warps, &y);
            let qt = build_quadratic_tensor(&y);

            let img = fixtures::noise(48, 48, 200 + trial as u64);
            let u = extract_bbox(&img, spec.center, &bbox).unwrap();
            let e = build_error_matrix(&img, &spec, &warps).unwrap();
            assert!(
                (instantiate_linear(&lt, &u).unwrap() - &warps * e.transpose()).amax() < 1e-10
            );
            assert!(
                (instantiate_quadratic(&qt, &u).unwrap() - &e * e.transpose()).amax() < 1e-10
            );
        }
    }
}
