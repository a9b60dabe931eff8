//! Energy-minimization refiners: forward-additive Lucas-Kanade (kept as a
//! reference), inverse-compositional LK, and efficient second-order
//! minimization.
//!
//! All three minimize the sum of squared differences between a fixed
//! template and a warped patch of the input image. Warps act on offsets
//! relative to the patch center, so a refiner samples the input at
//! `center + M(p)·offset`.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::imaging::{bilinear_sample, gradient, Image, PatchSpec, TemplatePatch};
use crate::warp::AffineParams;

/// Default stop tolerance on the max-norm of the parameter update.
pub const DEFAULT_TOL: f64 = 1e-4;
/// Default iteration budget for energy-based refiners.
pub const DEFAULT_MAX_ITERS: u32 = 10;

/// Outcome of an alignment run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignResult {
    pub params: AffineParams,
    pub iterations: u32,
    /// Sum of squared residuals sampled at the start of the last iteration.
    pub residual: f64,
    pub converged: bool,
}

/// Steepest-descent image: one row per patch pixel, the image gradient
/// composed with the affine Jacobian at that pixel's offset. The
/// translation columns (2 and 5) are the raw gradients.
pub fn steepest_descent(grads: &[(f64, f64)], offsets: &[(i32, i32)]) -> DMatrix<f64> {
    assert_eq!(grads.len(), offsets.len());
    let mut j = DMatrix::zeros(grads.len(), 6);
    for (b, (&(gx, gy), &(dx, dy))) in grads.iter().zip(offsets).enumerate() {
        let (x, y) = (dx as f64, dy as f64);
        j[(b, 0)] = gx * x;
        j[(b, 1)] = gx * y;
        j[(b, 2)] = gx;
        j[(b, 3)] = gy * x;
        j[(b, 4)] = gy * y;
        j[(b, 5)] = gy;
    }
    j
}

/// Central-difference gradient at a subpixel location, by differencing
/// bilinear samples one pixel apart.
pub fn subpixel_gradient(img: &Image, x: f64, y: f64) -> Result<(f64, f64)> {
    let gx = (bilinear_sample(img, x + 1.0, y)? - bilinear_sample(img, x - 1.0, y)?) / 2.0;
    let gy = (bilinear_sample(img, x, y + 1.0)? - bilinear_sample(img, x, y - 1.0)?) / 2.0;
    Ok((gx, gy))
}

/// Template gradients at the patch's integer locations.
fn template_gradients(img: &Image, spec: &PatchSpec) -> Result<Vec<(f64, f64)>> {
    let (cx, cy) = spec.center;
    spec.offsets()
        .iter()
        .map(|&(dx, dy)| {
            let (x, y) = (cx + dx, cy + dy);
            if x < 1 || y < 1 {
                return Err(Error::OutOfBounds(format!(
                    "template gradient at ({x}, {y})"
                )));
            }
            gradient(img, x as usize, y as usize)
        })
        .collect()
}

fn solve_normal_equations(j: &DMatrix<f64>, r: &DVector<f64>) -> Result<Vector6<f64>> {
    let h: Matrix6<f64> = (j.transpose() * j).fixed_view::<6, 6>(0, 0).into();
    let g = j.transpose() * r;
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("normal equations rank-deficient".into()))?;
    Ok(chol.solve(&Vector6::from_column_slice(g.as_slice())))
}

/// Precomputed inverse-compositional state for one template.
#[derive(Debug, Clone)]
pub struct IclkPrecomp {
    pub patch: TemplatePatch,
    /// n x 6 steepest-descent image of the template.
    pub sd: DMatrix<f64>,
    /// 6 x n pseudo-inverse of `sd`.
    pub pinv: DMatrix<f64>,
}

impl IclkPrecomp {
    /// Builds the pseudo-inverse for a template with known gradients; fails
    /// if the Jacobian has rank below 6.
    pub fn from_parts(patch: TemplatePatch, grads: &[(f64, f64)]) -> Result<Self> {
        let sd = steepest_descent(grads, &patch.offsets);
        let h: Matrix6<f64> = (sd.transpose() * &sd).fixed_view::<6, 6>(0, 0).into();
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("template Jacobian rank < 6".into()))?;
        let mut pinv = DMatrix::zeros(6, sd.nrows());
        let jt = sd.transpose();
        for c in 0..jt.ncols() {
            let col = chol.solve(&Vector6::from_column_slice(jt.column(c).as_slice()));
            pinv.set_column(c, &DVector::from_column_slice(col.as_slice()));
        }
        Ok(IclkPrecomp { patch, sd, pinv })
    }
}

/// Extracts the template and its steepest-descent pseudo-inverse from an
/// image region.
pub fn iclk_precompute(img: &Image, spec: &PatchSpec) -> Result<IclkPrecomp> {
    let patch = TemplatePatch::extract(img, spec)?;
    let grads = template_gradients(img, spec)?;
    IclkPrecomp::from_parts(patch, &grads)
}

/// Precomputed state for ESM: template values and Jacobian.
#[derive(Debug, Clone)]
pub struct EsmPrecomp {
    pub patch: TemplatePatch,
    pub sd: DMatrix<f64>,
}

impl EsmPrecomp {
    pub fn from_parts(patch: TemplatePatch, grads: &[(f64, f64)]) -> Self {
        let sd = steepest_descent(grads, &patch.offsets);
        EsmPrecomp { patch, sd }
    }
}

pub fn esm_precompute(img: &Image, spec: &PatchSpec) -> Result<EsmPrecomp> {
    let patch = TemplatePatch::extract(img, spec)?;
    let grads = template_gradients(img, spec)?;
    Ok(EsmPrecomp::from_parts(patch, &grads))
}

/// Samples the warped patch and its residual against the template.
fn warped_residual(
    img: &Image,
    center: (i32, i32),
    patch: &TemplatePatch,
    p: &AffineParams,
) -> Result<(Vec<(f64, f64)>, DVector<f64>)> {
    let m = p.to_matrix();
    let (cx, cy) = (center.0 as f64, center.1 as f64);
    let mut locs = Vec::with_capacity(patch.len());
    let mut r = DVector::zeros(patch.len());
    for (b, &(dx, dy)) in patch.offsets.iter().enumerate() {
        let (wx, wy) = m.apply(dx as f64, dy as f64);
        let (sx, sy) = (cx + wx, cy + wy);
        r[b] = bilinear_sample(img, sx, sy)? - patch.values[b];
        locs.push((sx, sy));
    }
    Ok((locs, r))
}

/// Forward-additive Lucas-Kanade. Recomputes the steepest-descent image on
/// the re-warped input every iteration and updates `p <- p + dp`.
pub fn lk_refine(
    patch: &TemplatePatch,
    img: &Image,
    center: (i32, i32),
    p0: AffineParams,
    max_iters: u32,
    tol: f64,
) -> Result<AlignResult> {
    let mut p = p0;
    let mut residual = 0.0;
    for it in 1..=max_iters {
        let (locs, r) = warped_residual(img, center, patch, &p)?;
        residual = r.norm_squared();
        let grads: Vec<(f64, f64)> = locs
            .iter()
            .map(|&(x, y)| subpixel_gradient(img, x, y))
            .collect::<Result<_>>()?;
        let j = steepest_descent(&grads, &patch.offsets);
        // Minimize ||r + J dp||: dp = -(J^T J)^-1 J^T r.
        let dp = -solve_normal_equations(&j, &r)?;
        p = AffineParams([
            p.0[0] + dp[0],
            p.0[1] + dp[1],
            p.0[2] + dp[2],
            p.0[3] + dp[3],
            p.0[4] + dp[4],
            p.0[5] + dp[5],
        ]);
        if dp.amax() < tol {
            return Ok(AlignResult { params: p, iterations: it, residual, converged: true });
        }
    }
    Ok(AlignResult { params: p, iterations: max_iters, residual, converged: false })
}

/// Inverse-compositional LK: `dp` from the precomputed pseudo-inverse,
/// composed as `p <- p ∘ dp^-1`.
pub fn iclk_refine(
    pre: &IclkPrecomp,
    img: &Image,
    center: (i32, i32),
    p0: AffineParams,
    max_iters: u32,
    tol: f64,
) -> Result<AlignResult> {
    let mut p = p0;
    let mut residual = 0.0;
    for it in 1..=max_iters {
        let (_, r) = warped_residual(img, center, &pre.patch, &p)?;
        residual = r.norm_squared();
        let dp_v = &pre.pinv * &r;
        let dp = AffineParams::from_vector(&Vector6::from_column_slice(dp_v.as_slice()));
        p = p.compose(dp.invert()?);
        if dp.norm_inf() < tol {
            return Ok(AlignResult { params: p, iterations: it, residual, converged: true });
        }
    }
    Ok(AlignResult { params: p, iterations: max_iters, residual, converged: false })
}

/// Efficient second-order minimization: solves with the average of the
/// template Jacobian and the current image Jacobian, then `p <- p + dp`.
pub fn esm_refine(
    pre: &EsmPrecomp,
    img: &Image,
    center: (i32, i32),
    p0: AffineParams,
    max_iters: u32,
    tol: f64,
) -> Result<AlignResult> {
    let mut p = p0;
    let mut residual = 0.0;
    for it in 1..=max_iters {
        let (locs, r) = warped_residual(img, center, &pre.patch, &p)?;
        residual = r.norm_squared();
        let grads: Vec<(f64, f64)> = locs
            .iter()
            .map(|&(x, y)| subpixel_gradient(img, x, y))
            .collect::<Result<_>>()?;
        let j_img = steepest_descent(&grads, &pre.patch.offsets);
        let j_avg = (&pre.sd + j_img) * 0.5;
        let dp = -solve_normal_equations(&j_avg, &r)?;
        p = AffineParams([
            p.0[0] + dp[0],
            p.0[1] + dp[1],
            p.0[2] + dp[2],
            p.0[3] + dp[3],
            p.0[4] + dp[4],
            p.0[5] + dp[5],
        ]);
        if dp.amax() < tol {
            return Ok(AlignResult { params: p, iterations: it, residual, converged: true });
        }
    }
    Ok(AlignResult { params: p, iterations: max_iters, residual, converged: false })
}
