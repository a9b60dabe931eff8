//! Linear Predictor learning and prediction.
//!
//! A Linear Predictor is a 6xn matrix `A` mapping an intensity-residual
//! vector to a warp update in a single multiplication. Training pairs a
//! 6xm warp matrix `P` (sampled warps, one per column) with an nxm error
//! matrix `E` (the intensity change each warp induces on the template) and
//! solves `A = P E^T (E E^T + ridge I)^-1` or one of its reduced variants.

use nalgebra::{DMatrix, DVector, Vector6};

use crate::error::{Error, Result};
use crate::imaging::{sample_warped_patch, Image, PatchSpec, SamplePattern, TemplatePatch};
use crate::warp::{column_params, AffineParams, WarpRanges};

/// Ridge regularization passed to the learners.
///
/// `ScaledTrace(s)` resolves to `s * tr(G) / dim(G)` for the Gram matrix `G`
/// the learner inverts, making the default scale-free. Near-constant patches
/// produce a near-zero trace, so the system stays singular rather than being
/// silently regularized into nonsense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    Absolute(f64),
    ScaledTrace(f64),
}

impl Ridge {
    /// Default documented ridge: `1e-8 * tr(G) / dim(G)`.
    pub fn default_scaled() -> Self {
        Ridge::ScaledTrace(1e-8)
    }

    fn resolve(self, gram: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Absolute(v) => v,
            Ridge::ScaledTrace(s) => s * gram.trace() / gram.nrows() as f64,
        }
    }
}

/// Identifies which learner produced a predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerTag {
    Jd,
    Dct(u32),
    Hp,
    HpDct(u32),
    Sym,
    SymDct(u32),
}

impl std::fmt::Display for LearnerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LearnerTag::Jd => write!(f, "jd"),
            LearnerTag::Dct(r) => write!(f, "dct-{r}"),
            LearnerTag::Hp => write!(f, "hp"),
            LearnerTag::HpDct(r) => write!(f, "hpdct-{r}"),
            LearnerTag::Sym => write!(f, "sym"),
            LearnerTag::SymDct(r) => write!(f, "symdct-{r}"),
        }
    }
}

/// A trained predictor bundled with everything prediction needs.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    /// The 6xn predictor matrix.
    pub matrix: DMatrix<f64>,
    /// Template values and offsets the predictor was trained on.
    pub patch: TemplatePatch,
    pub side: u32,
    pub pattern: SamplePattern,
    pub ranges: WarpRanges,
    pub num_warps: u32,
    pub learner: LearnerTag,
}

/// Builds the error matrix: column `c` holds the intensity change induced
/// by warp column `c` of `warps` on the patch.
pub fn build_error_matrix(
    img: &Image,
    spec: &PatchSpec,
    warps: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let t0 = TemplatePatch::extract(img, spec)?;
    let n = t0.len();
    let m = warps.ncols();
    let mut e = DMatrix::zeros(n, m);
    for c in 0..m {
        let p = column_params(warps, c);
        let warped = sample_warped_patch(img, spec.center, &t0.offsets, &p)?;
        e.set_column(c, &(warped - &t0.values));
    }
    Ok(e)
}

/// Shared final solve: `A = lin (quad + ridge I)^-1` for a 6xk linear term
/// and a kxk symmetric quadratic term.
pub(crate) fn solve_predictor(
    lin: &DMatrix<f64>,
    quad: &DMatrix<f64>,
    ridge: Ridge,
) -> Result<DMatrix<f64>> {
    let k = quad.nrows();
    if quad.ncols() != k || lin.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: lin.ncols() });
    }
    let mut g = quad.clone();
    let r = ridge.resolve(quad);
    for i in 0..k {
        g[(i, i)] += r;
    }
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("gram matrix not positive definite".into()))?;
    // A = lin G^-1 = (G^-1 lin^T)^T since G is symmetric.
    Ok(chol.solve(&lin.transpose()).transpose())
}

/// Closed-form least-squares learner: `A = P E^T (E E^T + ridge I)^-1`.
pub fn learn_jd(warps: &DMatrix<f64>, errors: &DMatrix<f64>, ridge: Ridge) -> Result<DMatrix<f64>> {
    if warps.ncols() != errors.ncols() {
        return Err(Error::DimensionMismatch { expected: warps.ncols(), got: errors.ncols() });
    }
    let lin = warps * errors.transpose();
    let quad = errors * errors.transpose();
    solve_predictor(&lin, &quad, ridge)
}

/// Orthonormal DCT reduction of rasterized patches.
///
/// `full` maps an image-space patch vector to its 2-D DCT coefficients;
/// `reduced` keeps the `retained` lowest-frequency rows, ordered by
/// ascending frequency sum `i + j` with ties by ascending `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DctMapping {
    pub side: u32,
    pub retained: u32,
    /// The h x h DCT matrix.
    pub dct: DMatrix<f64>,
    /// The n x n stacked-basis transform (n = side^2).
    pub full: DMatrix<f64>,
    /// The retained x n row selection of `full`.
    pub reduced: DMatrix<f64>,
}

/// Builds the DCT mapping for a dense `side x side` patch.
pub fn build_dct_mapping(side: u32, retained: u32) -> Result<DctMapping> {
    let h = side as usize;
    let n = h * h;
    if retained == 0 || retained as usize > n {
        return Err(Error::Config(format!(
            "retained coefficients {retained} outside [1, {n}]"
        )));
    }
    let mut c = DMatrix::zeros(h, h);
    for i in 0..h {
        let alpha = if i == 0 { 1.0 } else { 2.0 };
        for j in 0..h {
            c[(i, j)] = (alpha / h as f64).sqrt()
                * (std::f64::consts::PI * (2 * j + 1) as f64 * i as f64 / (2 * h) as f64).cos();
        }
    }

    // Transform each image-space basis matrix and rasterize it row-major;
    // column k of `full` is the transform of basis k.
    let mut full = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut basis = DMatrix::zeros(h, h);
        basis[(k / h, k % h)] = 1.0;
        let u = &c * basis * c.transpose();
        for row in 0..h {
            for col in 0..h {
                full[(row * h + col, k)] = u[(row, col)];
            }
        }
    }

    let mut order: Vec<(usize, usize)> = (0..h)
        .flat_map(|i| (0..h).map(move |j| (i, j)))
        .collect();
    order.sort_by_key(|&(i, j)| (i + j, i));
    let mut reduced = DMatrix::zeros(retained as usize, n);
    for (r, &(i, j)) in order.iter().take(retained as usize).enumerate() {
        reduced.set_row(r, &full.row(i * h + j));
    }

    Ok(DctMapping { side, retained, dct: c, full, reduced })
}

/// DCT-reduced learner: `A = P Ê_r^T (Ê_r Ê_r^T + ridge I)^-1 W_r` with
/// `Ê_r = W_r E`.
pub fn learn_dct(
    warps: &DMatrix<f64>,
    errors: &DMatrix<f64>,
    map: &DctMapping,
    ridge: Ridge,
) -> Result<DMatrix<f64>> {
    if map.reduced.ncols() != errors.nrows() {
        return Err(Error::DimensionMismatch {
            expected: map.reduced.ncols(),
            got: errors.nrows(),
        });
    }
    let e_hat = &map.reduced * errors;
    let lin = warps * e_hat.transpose();
    let quad = &e_hat * e_hat.transpose();
    let a_hat = solve_predictor(&lin, &quad, ridge)?;
    Ok(a_hat * &map.reduced)
}

/// Re-formulated learner working through the warp-matrix pseudo-inverse:
/// `D = E P^T (P P^T)^-1`, then `A = (D^T D + ridge I)^-1 D^T`. Both
/// inverted systems are 6x6.
pub fn learn_hp(warps: &DMatrix<f64>, errors: &DMatrix<f64>, ridge: Ridge) -> Result<DMatrix<f64>> {
    let d = reformulation_matrix(warps, errors)?;
    solve_left(&d, ridge)
}

/// Hybrid learner: the re-formulation applied to the DCT-reduced error
/// matrix, `D̂ = W_r^T Ê_r P^T (P P^T)^-1`.
pub fn learn_hpdct(
    warps: &DMatrix<f64>,
    errors: &DMatrix<f64>,
    map: &DctMapping,
    ridge: Ridge,
) -> Result<DMatrix<f64>> {
    let e_hat = &map.reduced * errors;
    let d_hat = map.reduced.transpose() * reformulation_matrix(warps, &e_hat)?;
    solve_left(&d_hat, ridge)
}

/// `A = (D^T D + ridge I)^-1 D^T` for an n x 6 matrix `D`.
fn solve_left(d: &DMatrix<f64>, ridge: Ridge) -> Result<DMatrix<f64>> {
    let quad = d.transpose() * d;
    let mut h = quad.clone();
    let r = ridge.resolve(&quad);
    for i in 0..h.nrows() {
        h[(i, i)] += r;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("gram matrix not positive definite".into()))?;
    Ok(chol.solve(&d.transpose()))
}

/// `D = E P^T (P P^T)^-1`, shared by the re-formulation learners.
fn reformulation_matrix(warps: &DMatrix<f64>, errors: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if warps.ncols() != errors.ncols() {
        return Err(Error::DimensionMismatch { expected: warps.ncols(), got: errors.ncols() });
    }
    let ppt = warps * warps.transpose();
    let chol = ppt
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("warp matrix does not span 6 dimensions".into()))?;
    // D^T = (P P^T)^-1 P E^T.
    Ok(chol.solve(&(warps * errors.transpose())).transpose())
}

/// Runs the predictor: per iteration samples the residual under the current
/// warp, maps it to an update `dp = A·di`, and composes `p <- p ∘ dp^-1`.
pub fn predict(
    lp: &LinearPredictor,
    img: &Image,
    center: (i32, i32),
    p0: AffineParams,
    iterations: u32,
) -> Result<crate::energy::AlignResult> {
    let mut p = p0;
    let mut residual = 0.0;
    for _ in 0..iterations {
        let warped = sample_warped_patch(img, center, &lp.patch.offsets, &p)?;
        let di = warped - &lp.patch.values;
        residual = di.norm_squared();
        let dp_v = &lp.matrix * di;
        let dp = AffineParams::from_vector(&Vector6::from_column_slice(dp_v.as_slice()));
        p = p.compose(dp.invert()?);
    }
    Ok(crate::energy::AlignResult {
        params: p,
        iterations,
        residual,
        converged: true,
    })
}

/// Template values selected out of a bounding-box vector, given the
/// row-major index of each patch pixel inside the box.
pub(crate) fn template_from_bbox(u: &DVector<f64>, identity_indices: &[usize]) -> DVector<f64> {
    DVector::from_iterator(identity_indices.len(), identity_indices.iter().map(|&d| u[d]))
}
