//! Affine warp parametrization, composition, inversion and synthetic sampling.
//!
//! A warp is the six-parameter affine map
//!
//! ```text
//! M(p) = | 1+p0   p1   p2 |
//!        |  p3  1+p4   p5 |
//! ```
//!
//! applied to patch coordinates taken *relative to the patch center*, so
//! `p2`/`p5` are center translations in pixels and the identity warp is
//! `p = 0`.

use nalgebra::{DMatrix, Matrix2, Vector2, Vector6};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Determinant threshold below which a warp is treated as singular.
pub const SINGULAR_DET_EPS: f64 = 1e-12;

/// The six warp parameters `p0..p5`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams(pub [f64; 6]);

/// Row-major 2x3 affine matrix, laid out as `[[1+p0, p1, p2], [p3, 1+p4, p5]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix(pub [[f64; 3]; 2]);

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams([0.0; 6])
    }

    /// Pure translation by `(tx, ty)` pixels.
    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineParams([0.0, 0.0, tx, 0.0, 0.0, ty])
    }

    pub fn to_matrix(self) -> AffineMatrix {
        let [p0, p1, p2, p3, p4, p5] = self.0;
        AffineMatrix([[1.0 + p0, p1, p2], [p3, 1.0 + p4, p5]])
    }

    pub fn from_matrix(m: &AffineMatrix) -> Self {
        AffineParams([
            m.0[0][0] - 1.0,
            m.0[0][1],
            m.0[0][2],
            m.0[1][0],
            m.0[1][1] - 1.0,
            m.0[1][2],
        ])
    }

    /// Composition `self ∘ inner`: the 2x3 truncation of the homogeneous
    /// product, `self` applied after `inner`.
    pub fn compose(self, inner: AffineParams) -> AffineParams {
        let a = self.to_matrix().0;
        let b = inner.to_matrix().0;
        let mut out = [[0.0; 3]; 2];
        for (r, out_row) in out.iter_mut().enumerate() {
            for c in 0..2 {
                out_row[c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            out_row[2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineParams::from_matrix(&AffineMatrix(out))
    }

    /// Inverse warp; fails when the linear part is singular.
    pub fn invert(self) -> Result<AffineParams> {
        let m = self.to_matrix().0;
        let lin = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
        let det = lin.determinant();
        if det.abs() < SINGULAR_DET_EPS {
            return Err(Error::SingularWarp(SINGULAR_DET_EPS));
        }
        let inv = Matrix2::new(lin[(1, 1)], -lin[(0, 1)], -lin[(1, 0)], lin[(0, 0)]) / det;
        let t = inv * Vector2::new(m[0][2], m[1][2]);
        Ok(AffineParams([
            inv[(0, 0)] - 1.0,
            inv[(0, 1)],
            -t.x,
            inv[(1, 0)],
            inv[(1, 1)] - 1.0,
            -t.y,
        ]))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest absolute component.
    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.0)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        AffineParams([v[0], v[1], v[2], v[3], v[4], v[5]])
    }
}

impl AffineMatrix {
    /// Maps a (patch-relative) location to its warped subpixel location.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.0[0][0] * x + self.0[0][1] * y + self.0[0][2],
            self.0[1][0] * x + self.0[1][1] * y + self.0[1][2],
        )
    }
}

/// Per-parameter closed training intervals; the identity must be reachable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpRanges {
    pub lo: [f64; 6],
    pub hi: [f64; 6],
}

impl WarpRanges {
    pub fn new(lo: [f64; 6], hi: [f64; 6]) -> Result<Self> {
        for i in 0..6 {
            if !lo[i].is_finite() || !hi[i].is_finite() {
                return Err(Error::Config(format!("range {i} is not finite")));
            }
            if lo[i] > hi[i] {
                return Err(Error::Config(format!(
                    "range {i} is empty: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
            if lo[i] > 0.0 || hi[i] < 0.0 {
                return Err(Error::Config(format!(
                    "range {i} does not contain the identity: [{}, {}]",
                    lo[i], hi[i]
                )));
            }
        }
        Ok(WarpRanges { lo, hi })
    }

    /// Symmetric ranges: `±translation` for `p2`,`p5` and `±linear` for the rest.
    pub fn symmetric(translation: f64, linear: f64) -> Result<Self> {
        let mut lo = [-linear; 6];
        let mut hi = [linear; 6];
        lo[2] = -translation;
        hi[2] = translation;
        lo[5] = -translation;
        hi[5] = translation;
        WarpRanges::new(lo, hi)
    }

    pub fn zero() -> Self {
        WarpRanges { lo: [0.0; 6], hi: [0.0; 6] }
    }

    pub fn contains(&self, p: &AffineParams) -> bool {
        (0..6).all(|i| p.0[i] >= self.lo[i] && p.0[i] <= self.hi[i])
    }

    pub fn is_subset_of(&self, other: &WarpRanges) -> bool {
        (0..6).all(|i| self.lo[i] >= other.lo[i] && self.hi[i] <= other.hi[i])
    }
}

/// Draws `m` warps, one per column of the returned 6xm matrix.
///
/// Each parameter is drawn independently and uniformly from its interval.
/// The seed-to-stream mapping is fixed: a `ChaCha8` generator seeded with
/// `seed_from_u64(seed)`, consumed column by column and parameter by
/// parameter through the `rand` uniform range sampler. Models persisted to
/// disk record this seed, so the mapping must not change between releases.
pub fn sample_warps(ranges: &WarpRanges, m: usize, seed: u64) -> DMatrix<f64> {
    assert!(m >= 1, "at least one warp must be drawn");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(6, m);
    for c in 0..m {
        for i in 0..6 {
            let (lo, hi) = (ranges.lo[i], ranges.hi[i]);
            out[(i, c)] = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        }
    }
    out
}

/// Extracts column `c` of a 6xm warp matrix.
pub fn column_params(warps: &DMatrix<f64>, c: usize) -> AffineParams {
    AffineParams([
        warps[(0, c)],
        warps[(1, c)],
        warps[(2, c)],
        warps[(3, c)],
        warps[(4, c)],
        warps[(5, c)],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn matrix_layout() {
        let m = AffineParams([0.0; 6]).to_matrix();
        assert_eq!(m.0, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

        let m = AffineParams([0.0, 0.0, 0.5, 0.0, 0.0, -0.25]).to_matrix();
        assert_eq!(m.0, [[1.0, 0.0, 0.5], [0.0, 1.0, -0.25]]);

        let m = AffineParams([0.1, 0.0, 0.0, 0.0, 0.1, 0.0]).to_matrix();
        assert_eq!(m.0, [[1.1, 0.0, 0.0], [0.0, 1.1, 0.0]]);
    }

    #[test]
    fn apply_examples() {
        let id = AffineParams::identity().to_matrix();
        assert_eq!(id.apply(3.0, 4.0), (3.0, 4.0));

        let t = AffineParams::translation(0.5, -0.25).to_matrix();
        assert_eq!(t.apply(0.0, 0.0), (0.5, -0.25));

        // Hand expansion: (1.1*2, 5).
        let s = AffineParams([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).to_matrix();
        let (x, y) = s.apply(2.0, 5.0);
        assert_abs_diff_eq!(x, 2.2, epsilon = 1e-15);
        assert_abs_diff_eq!(y, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn compose_identity_and_translations() {
        let q = AffineParams([0.02, -0.01, 0.3, 0.015, -0.03, -0.6]);
        let id = AffineParams::identity();
        for composed in [id.compose(q), q.compose(id)] {
            for i in 0..6 {
                assert_abs_diff_eq!(composed.0[i], q.0[i], epsilon = 1e-15);
            }
        }

        let t = AffineParams::translation(1.0, 0.0).compose(AffineParams::translation(0.0, 1.0));
        assert_eq!(t, AffineParams::translation(1.0, 1.0));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(
            AffineParams::identity().invert().unwrap(),
            AffineParams::identity()
        );
        let t = AffineParams::translation(0.5, -0.25).invert().unwrap();
        assert_eq!(t, AffineParams::translation(-0.5, 0.25));

        // Scale 2 in x inverts to scale 1/2: p0 = -0.5.
        let s = AffineParams([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).invert().unwrap();
        assert_abs_diff_eq!(s.0[0], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn invert_rejects_singular() {
        // Zero determinant: second row a multiple of the first.
        let p = AffineParams([0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(p.invert(), Err(Error::SingularWarp(_))));
    }

    #[test]
    fn sample_warps_zero_ranges_and_determinism() {
        let p = sample_warps(&WarpRanges::zero(), 3, 42);
        assert_eq!(p.ncols(), 3);
        assert!(p.iter().all(|&v| v == 0.0));

        let ranges = WarpRanges::symmetric(1.0, 0.2).unwrap();
        let a = sample_warps(&ranges, 64, 7);
        let b = sample_warps(&ranges, 64, 7);
        assert_eq!(a, b);
        let c = sample_warps(&ranges, 64, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_warps_mean_near_zero() {
        // Law of large numbers: mean of p2 over 10^4 draws within ±0.03.
        let ranges = WarpRanges::symmetric(1.0, 0.0).unwrap();
        let p = sample_warps(&ranges, 10_000, 123);
        let mean = p.row(2).iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn sample_warps_within_ranges() {
        let ranges = WarpRanges::new(
            [-0.1, -0.05, -1.0, 0.0, -0.2, -0.5],
            [0.2, 0.0, 0.5, 0.1, 0.2, 1.5],
        )
        .unwrap();
        let p = sample_warps(&ranges, 500, 99);
        for c in 0..500 {
            assert!(ranges.contains(&column_params(&p, c)));
        }
    }

    #[test]
    fn ranges_validation() {
        assert!(WarpRanges::new([0.1; 6], [0.2; 6]).is_err()); // excludes 0
        assert!(WarpRanges::new([0.0; 6], [-0.1; 6]).is_err()); // empty
        assert!(WarpRanges::symmetric(1.0, 0.2).is_ok());
    }

    fn small_params() -> impl Strategy<Value = AffineParams> {
        prop::array::uniform6(-0.3f64..0.3).prop_map(AffineParams)
    }

    proptest! {
        #[test]
        fn roundtrip_matrix(p in small_params()) {
            let q = AffineParams::from_matrix(&p.to_matrix());
            for i in 0..6 {
                prop_assert!((p.0[i] - q.0[i]).abs() < 1e-15);
            }
        }

        #[test]
        fn compose_associative(a in small_params(), b in small_params(), c in small_params()) {
            let left = a.compose(b).compose(c);
            let right = a.compose(b.compose(c));
            for i in 0..6 {
                prop_assert!((left.0[i] - right.0[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn apply_is_homomorphic(a in small_params(), b in small_params(),
                                x in -8.0f64..8.0, y in -8.0f64..8.0) {
            let (cx, cy) = a.compose(b).to_matrix().apply(x, y);
            let (ix, iy) = b.to_matrix().apply(x, y);
            let (dx, dy) = a.to_matrix().apply(ix, iy);
            prop_assert!((cx - dx).abs() < 1e-12);
            prop_assert!((cy - dy).abs() < 1e-12);
        }

        #[test]
        fn invert_composes_to_identity(p in small_params()) {
            let inv = p.invert().unwrap();
            let id = p.compose(inv);
            for (i, &v) in id.0.iter().enumerate() {
                prop_assert!(v.abs() < 1e-12, "component {i} = {v}");
            }
        }
    }
}
