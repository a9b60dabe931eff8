//! Synthetic benchmark execution: trains every configured method on each
//! detected corner, evaluates seeded test warps, and aggregates RMSE and
//! timing.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{BenchConfig, Method, SweepAxis};
use super::stats::{median, spearman_rho};
use crate::energy::{
    esm_precompute, esm_refine, iclk_precompute, iclk_refine, EsmPrecomp, IclkPrecomp,
};
use crate::error::{Error, Result};
use crate::imaging::{bilinear_sample, detect_corners, load_pgm, Image, PatchSpec, TemplatePatch};
use crate::lp::{
    build_dct_mapping, build_error_matrix, learn_dct, learn_hp, learn_hpdct, learn_jd, predict,
    DctMapping, LearnerTag, LinearPredictor, Ridge,
};
use crate::quality::expected_sq_error;
use crate::symbolic::{extract_bbox, learn_symbolic, learn_symbolic_dct_with, SymbolicModel};
use crate::warp::{column_params, sample_warps, AffineParams};

/// Salt mixed into the per-corner noise stream so it never collides with
/// the per-corner test-warp stream derived from the same seed.
const NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Aggregated outcome for one method.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    pub keypoints: usize,
    /// Attempted (corner, test warp) cells.
    pub cells: usize,
    pub results: usize,
    pub skips: usize,
    /// Root mean square of per-parameter errors pooled over all results.
    pub rmse: f64,
    /// Mean per-keypoint training time (median over repeats), milliseconds.
    pub train_ms: f64,
    /// Mean per-refinement time (median over repeats), milliseconds.
    pub refine_ms: f64,
    /// One-off symbolic tensor build shared by all keypoints; zero for
    /// non-symbolic methods.
    pub tensor_build_ms: f64,
}

/// Full synthetic-run report.
#[derive(Debug, Clone)]
pub struct SyntheticReport {
    pub results: Vec<MethodResult>,
    /// Corners actually used (x, y).
    pub corners: Vec<(u32, u32)>,
    pub tensor_build_ms: f64,
}

impl SyntheticReport {
    /// CSV with one row per method and a reconciling footer row. Timing
    /// columns (`train_ms`, `refine_ms`, `tensor_build_ms`) are the only
    /// nondeterministic ones.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,keypoints,cells,results,skips,rmse,train_ms,refine_ms,tensor_build_ms\n",
        );
        let mut cells = 0;
        let mut results = 0;
        let mut skips = 0;
        for r in &self.results {
            cells += r.cells;
            results += r.results;
            skips += r.skips;
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.method.tag(),
                r.keypoints,
                r.cells,
                r.results,
                r.skips,
                r.rmse,
                r.train_ms,
                r.refine_ms,
                r.tensor_build_ms
            ));
        }
        out.push_str(&format!(
            "all,{},{cells},{results},{skips},,,,\n",
            self.corners.len()
        ));
        out
    }
}

/// Per-keypoint error-prediction outcome.
#[derive(Debug, Clone)]
pub struct ErrorPredictionReport {
    /// (keypoint id, x, y, predicted per-warp expected squared error,
    /// measured mean squared test error).
    pub rows: Vec<(u64, u32, u32, f64, f64)>,
    pub spearman: f64,
}

impl ErrorPredictionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("keypoint,x,y,predicted,measured\n");
        for &(id, x, y, p, m) in &self.rows {
            out.push_str(&format!("{id},{x},{y},{p:.9},{m:.9}\n"));
        }
        out.push_str(&format!("spearman,,,{:.6},\n", self.spearman));
        out
    }
}

/// Everything derived from the configuration before touching corners.
struct Session {
    img: Image,
    spec_side: u32,
    view_half: i32,
    margin: u32,
    model: Option<SymbolicModel>,
    tensor_build_ms: f64,
    /// Mappings keyed by retained coefficient count, shared across corners.
    dct_maps: BTreeMap<u32, DctMapping>,
    train_warps: DMatrix<f64>,
}

/// Required corner distance from the border: the warped view synthesis
/// reaches `center + q·v` for `|v| <= view_half`, plus interpolation and
/// gradient slack.
fn required_margin(config: &BenchConfig, view_half: i32) -> u32 {
    let r = &config.train_ranges;
    let amp = |i: usize| r.lo[i].abs().max(r.hi[i].abs());
    let scale = 1.0 + amp(0).max(amp(4)) + amp(1).max(amp(3));
    let trans = amp(2).max(amp(5));
    (view_half as f64 * scale + trans).ceil() as u32 + 2 + config.border_margin
}

fn view_half_for(config: &BenchConfig) -> i32 {
    let r = &config.train_ranges;
    let amp = |i: usize| r.lo[i].abs().max(r.hi[i].abs());
    let half = (config.side / 2) as f64;
    let scale = 1.0 + amp(0).max(amp(4)) + amp(1).max(amp(3));
    let trans = amp(2).max(amp(5));
    (half * scale + trans).ceil() as i32 + 4
}

fn prepare(config: &BenchConfig, img: Image) -> Result<Session> {
    config.validate()?;
    let view_half = view_half_for(config);

    let needs_model = config.methods.iter().any(|m| m.is_symbolic());
    let (model, tensor_build_ms) = if needs_model {
        let start = Instant::now();
        let model = SymbolicModel::build(
            config.side,
            config.pattern,
            &config.train_ranges,
            config.num_train_warps as u32,
            config.seed_train,
            None,
        )?;
        (Some(model), start.elapsed().as_secs_f64() * 1e3)
    } else {
        (None, 0.0)
    };

    let mut dct_maps = BTreeMap::new();
    for m in &config.methods {
        if let Some(r) = m.dct_r() {
            if !dct_maps.contains_key(&r) {
                dct_maps.insert(r, build_dct_mapping(config.side, r)?);
            }
        }
    }

    Ok(Session {
        img,
        spec_side: config.side,
        view_half,
        margin: required_margin(config, view_half),
        model,
        tensor_build_ms,
        dct_maps,
        train_warps: sample_warps(&config.train_ranges, config.num_train_warps, config.seed_train),
    })
}

fn corners_for(session: &Session, config: &BenchConfig) -> Result<Vec<(u32, u32)>> {
    let corners = detect_corners(
        &session.img,
        config.max_corners,
        config.min_corner_score,
        session.margin,
    );
    if corners.is_empty() {
        return Err(Error::Config(format!(
            "no corners survive a {}-pixel margin on a {}x{} image",
            session.margin,
            session.img.width(),
            session.img.height()
        )));
    }
    Ok(corners.into_iter().map(|c| (c.x, c.y)).collect())
}

enum Trained {
    Iclk(IclkPrecomp),
    Esm(EsmPrecomp),
    Lp(Box<LinearPredictor>),
}

/// Trains one method on one corner. The returned closure body is what the
/// per-keypoint training time measures.
fn train_method(
    session: &Session,
    config: &BenchConfig,
    method: Method,
    spec: &PatchSpec,
) -> Result<Trained> {
    match method {
        Method::Iclk => Ok(Trained::Iclk(iclk_precompute(&session.img, spec)?)),
        Method::Esm => Ok(Trained::Esm(esm_precompute(&session.img, spec)?)),
        Method::Sym => {
            let model = session.model.as_ref().expect("model prepared");
            let u = extract_bbox(&session.img, spec.center, &model.bbox)?;
            let lp = learn_symbolic(model, &u, Ridge::ScaledTrace(config.ridge_scale))?;
            Ok(Trained::Lp(Box::new(lp)))
        }
        Method::SymDct(r) => {
            let model = session.model.as_ref().expect("model prepared");
            let map = &session.dct_maps[&r];
            let u = extract_bbox(&session.img, spec.center, &model.bbox)?;
            let lp =
                learn_symbolic_dct_with(model, map, &u, Ridge::ScaledTrace(config.ridge_scale))?;
            Ok(Trained::Lp(Box::new(lp)))
        }
        Method::Jd | Method::Dct(_) | Method::Hp | Method::HpDct(_) => {
            let errors = build_error_matrix(&session.img, spec, &session.train_warps)?;
            let ridge = Ridge::ScaledTrace(config.ridge_scale);
            let (matrix, tag) = match method {
                Method::Jd => (learn_jd(&session.train_warps, &errors, ridge)?, LearnerTag::Jd),
                Method::Dct(r) => (
                    learn_dct(&session.train_warps, &errors, &session.dct_maps[&r], ridge)?,
                    LearnerTag::Dct(r),
                ),
                Method::Hp => (learn_hp(&session.train_warps, &errors, ridge)?, LearnerTag::Hp),
                Method::HpDct(r) => (
                    learn_hpdct(&session.train_warps, &errors, &session.dct_maps[&r], ridge)?,
                    LearnerTag::HpDct(r),
                ),
                _ => unreachable!(),
            };
            Ok(Trained::Lp(Box::new(LinearPredictor {
                matrix,
                patch: TemplatePatch::extract(&session.img, spec)?,
                side: config.side,
                pattern: config.pattern,
                ranges: config.train_ranges,
                num_warps: config.num_train_warps as u32,
                learner: tag,
            })))
        }
    }
}

/// Synthesizes the warped observation window for one (corner, test warp):
/// a `(2 half + 1)^2` image whose center pixel corresponds to the corner,
/// showing the source warped by `q` about it, with optional Gaussian noise.
pub fn synthesize_view(
    img: &Image,
    center: (u32, u32),
    q: &AffineParams,
    half: i32,
    noise: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<Image> {
    let m = q.to_matrix();
    let side = (2 * half + 1) as usize;
    let (cx, cy) = (center.0 as f64, center.1 as f64);
    let mut data = Vec::with_capacity(side * side);
    for vy in -half..=half {
        for vx in -half..=half {
            let (wx, wy) = m.apply(vx as f64, vy as f64);
            data.push(bilinear_sample(img, cx + wx, cy + wy)?);
        }
    }
    if let Some((sigma, rng)) = noise {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::Config(format!("bad noise sigma: {e}")))?;
            for v in &mut data {
                *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }
    Image::new(side, side, data)
}

fn refine_once(
    trained: &Trained,
    view: &Image,
    view_center: (i32, i32),
    config: &BenchConfig,
) -> Result<AffineParams> {
    let p0 = AffineParams::identity();
    let result = match trained {
        Trained::Iclk(pre) => iclk_refine(
            pre,
            view,
            view_center,
            p0,
            config.energy_iters,
            crate::energy::DEFAULT_TOL,
        )?,
        Trained::Esm(pre) => esm_refine(
            pre,
            view,
            view_center,
            p0,
            config.energy_iters,
            crate::energy::DEFAULT_TOL,
        )?,
        Trained::Lp(lp) => predict(lp, view, view_center, p0, config.lp_iters)?,
    };
    if !result.params.is_finite() {
        return Err(Error::SingularSystem("non-finite refinement result".into()));
    }
    // The converged alignment warp is the inverse of the warp that produced
    // the observation; report the estimate in the template frame.
    result.params.invert()
}

struct MethodCells {
    train_ms: f64,
    sum_sq: f64,
    results: usize,
    skips: usize,
    refine_ms_sum: f64,
    /// Predicted per-warp expected squared error (predictor methods only).
    predicted: Option<f64>,
}

fn evaluate_corner(
    session: &Session,
    config: &BenchConfig,
    index: usize,
    corner: (u32, u32),
) -> Result<Vec<MethodCells>> {
    let spec = PatchSpec::new(
        (corner.0 as i32, corner.1 as i32),
        session.spec_side,
        config.pattern,
    )?;
    let repeats = config.timing_repeats as usize;

    // Train every method, timing with medians over identical repeats.
    let mut trained: Vec<Option<Trained>> = Vec::new();
    let mut cells: Vec<MethodCells> = Vec::new();
    for &method in &config.methods {
        let mut times = Vec::with_capacity(repeats);
        let mut outcome: Option<Trained> = None;
        let mut failed = None;
        for _ in 0..repeats {
            let start = Instant::now();
            match train_method(session, config, method, &spec) {
                Ok(t) => outcome = Some(t),
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        if let Some(e) = failed {
            log::warn!(
                "corner {index} at ({}, {}): {} training failed: {e}",
                corner.0,
                corner.1,
                method.tag()
            );
            trained.push(None);
            cells.push(MethodCells {
                train_ms: f64::NAN,
                sum_sq: 0.0,
                results: 0,
                skips: config.num_test_warps,
                refine_ms_sum: 0.0,
                predicted: None,
            });
            continue;
        }
        let predicted = match (&outcome, &session.model) {
            (Some(Trained::Lp(lp)), Some(model)) if method.is_symbolic() => {
                let u = extract_bbox(&session.img, spec.center, &model.bbox)?;
                let lin = crate::symbolic::instantiate_linear(&model.linear, &u)?;
                let report = expected_sq_error(&lp.matrix, &lin, model.trace_ppt, index as u64)?;
                Some(report.expected_sq_error / config.num_train_warps as f64)
            }
            _ => None,
        };
        trained.push(outcome);
        cells.push(MethodCells {
            train_ms: median(&times),
            sum_sq: 0.0,
            results: 0,
            skips: 0,
            refine_ms_sum: 0.0,
            predicted,
        });
    }

    // Test warps and noise use per-corner streams derived from the test
    // seed and the corner index, independent of scheduling.
    let corner_seed = config.seed_test ^ index as u64;
    let test_warps = sample_warps(&config.test_ranges, config.num_test_warps, corner_seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(corner_seed ^ NOISE_SALT);
    let view_center = (session.view_half as i32, session.view_half as i32);

    for t in 0..config.num_test_warps {
        let q = column_params(&test_warps, t);
        let noise = if config.noise_sigma > 0.0 {
            Some((config.noise_sigma, &mut noise_rng))
        } else {
            None
        };
        let view = synthesize_view(&session.img, corner, &q, session.view_half, noise)?;

        for (mi, method) in config.methods.iter().enumerate() {
            let Some(tr) = &trained[mi] else { continue };
            match refine_once(tr, &view, view_center, config) {
                Ok(est) => {
                    let mut times = Vec::with_capacity(repeats);
                    for _ in 0..repeats {
                        let start = Instant::now();
                        let _ = refine_once(tr, &view, view_center, config);
                        times.push(start.elapsed().as_secs_f64() * 1e3);
                    }
                    let cell = &mut cells[mi];
                    cell.results += 1;
                    cell.refine_ms_sum += median(&times);
                    for i in 0..6 {
                        let d = est.0[i] - q.0[i];
                        cell.sum_sq += d * d;
                    }
                }
                Err(e) => {
                    log::warn!(
                        "corner {index} at ({}, {}), test warp {t}: {} skipped: {e}",
                        corner.0,
                        corner.1,
                        method.tag()
                    );
                    cells[mi].skips += 1;
                }
            }
        }
    }

    Ok(cells)
}

/// Runs the synthetic experiment on an already-loaded image.
pub fn run_synthetic_on(img: &Image, config: &BenchConfig) -> Result<SyntheticReport> {
    let session = prepare(config, img.clone())?;
    let corners = corners_for(&session, config)?;

    let per_corner: Vec<Result<Vec<MethodCells>>> = corners
        .par_iter()
        .enumerate()
        .map(|(i, &c)| evaluate_corner(&session, config, i, c))
        .collect();

    let mut merged: Vec<Vec<MethodCells>> = Vec::with_capacity(corners.len());
    for r in per_corner {
        merged.push(r?);
    }

    let mut results = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        let mut sum_sq = 0.0;
        let mut n_results = 0;
        let mut skips = 0;
        let mut refine_sum = 0.0;
        let mut train_times = Vec::new();
        for corner_cells in &merged {
            let c = &corner_cells[mi];
            sum_sq += c.sum_sq;
            n_results += c.results;
            skips += c.skips;
            refine_sum += c.refine_ms_sum;
            if c.train_ms.is_finite() {
                train_times.push(c.train_ms);
            }
        }
        let rmse = if n_results > 0 {
            (sum_sq / (n_results as f64 * 6.0)).sqrt()
        } else {
            f64::NAN
        };
        results.push(MethodResult {
            method,
            keypoints: corners.len(),
            cells: corners.len() * config.num_test_warps,
            results: n_results,
            skips,
            rmse,
            train_ms: if train_times.is_empty() {
                f64::NAN
            } else {
                train_times.iter().sum::<f64>() / train_times.len() as f64
            },
            refine_ms: if n_results > 0 {
                refine_sum / n_results as f64
            } else {
                f64::NAN
            },
            tensor_build_ms: if method.is_symbolic() {
                session.tensor_build_ms
            } else {
                0.0
            },
        });
    }

    Ok(SyntheticReport {
        results,
        corners,
        tensor_build_ms: session.tensor_build_ms,
    })
}

/// Loads the configured image and runs the synthetic experiment.
pub fn run_synthetic(config: &BenchConfig) -> Result<SyntheticReport> {
    let img = load_pgm(&config.image)?;
    run_synthetic_on(&img, config)
}

/// Runs one synthetic experiment per axis value and collects
/// `(value, method, rmse, train_ms, refine_ms)` rows as CSV.
pub fn run_sweep(config: &BenchConfig, axis: SweepAxis, values: &[f64]) -> Result<String> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let img = load_pgm(&config.image)?;
    let mut csv = format!("{},method,rmse,train_ms,refine_ms\n", axis.name());
    for &value in values {
        let mut cfg = config.clone();
        match axis {
            SweepAxis::M => cfg.num_train_warps = value as usize,
            SweepAxis::Side => cfg.side = value as u32,
            SweepAxis::Var => {
                cfg.apply_key("train_translation", &value.to_string())?;
                cfg.apply_key("test_translation", &value.to_string())?;
            }
        }
        let report = run_synthetic_on(&img, &cfg)?;
        for r in &report.results {
            csv.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                fmt_axis_value(value),
                r.method.tag(),
                r.rmse,
                r.train_ms,
                r.refine_ms
            ));
        }
    }
    Ok(csv)
}

fn fmt_axis_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Per-keypoint error prediction versus measured test error, using the
/// symbolic predictor. Degenerate rank ties yield a NaN correlation with a
/// warning.
pub fn run_error_prediction(config: &BenchConfig) -> Result<ErrorPredictionReport> {
    let img = load_pgm(&config.image)?;
    run_error_prediction_on(&img, config)
}

pub fn run_error_prediction_on(img: &Image, config: &BenchConfig) -> Result<ErrorPredictionReport> {
    let mut cfg = config.clone();
    cfg.methods = vec![Method::Sym];
    let session = prepare(&cfg, img.clone())?;
    let corners = corners_for(&session, &cfg)?;

    let per_corner: Vec<Result<(f64, f64)>> = corners
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let cells = evaluate_corner(&session, &cfg, i, c)?;
            let cell = &cells[0];
            if cell.results == 0 {
                return Err(Error::Config(format!(
                    "corner {i}: every test warp was skipped"
                )));
            }
            let predicted = cell.predicted.ok_or_else(|| {
                Error::SingularSystem(format!("corner {i}: no predictor learned"))
            })?;
            let measured = cell.sum_sq / cell.results as f64;
            Ok((predicted, measured))
        })
        .collect();

    let mut rows = Vec::with_capacity(corners.len());
    for (i, r) in per_corner.into_iter().enumerate() {
        let (predicted, measured) = r?;
        rows.push((i as u64, corners[i].0, corners[i].1, predicted, measured));
    }

    let predicted: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let measured: Vec<f64> = rows.iter().map(|r| r.4).collect();
    let rho = spearman_rho(&predicted, &measured);
    if rho.is_nan() {
        log::warn!("rank correlation undefined: degenerate ties in predictions or errors");
    }

    Ok(ErrorPredictionReport { rows, spearman: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn small_config() -> BenchConfig {
        let mut cfg = BenchConfig::default();
        cfg.image = "unused.pgm".into();
        cfg.side = 7;
        cfg.num_train_warps = 250;
        cfg.num_test_warps = 8;
        cfg.max_corners = 6;
        cfg.timing_repeats = 1;
        cfg.apply_key("train_translation", "0.6").unwrap();
        cfg.apply_key("train_linear", "0.1").unwrap();
        cfg.apply_key("test_translation", "0.6").unwrap();
        cfg.apply_key("test_linear", "0.1").unwrap();
        cfg.methods = vec![Method::Sym, Method::Jd, Method::Iclk];
        cfg
    }

    #[test]
    fn zero_test_ranges_recover_identity() {
        let img = fixtures::textured_board(128, 128, 44);
        let mut cfg = small_config();
        cfg.apply_key("test_translation", "0").unwrap();
        cfg.apply_key("test_linear", "0").unwrap();
        cfg.num_test_warps = 3;
        let report = run_synthetic_on(&img, &cfg).unwrap();
        for r in &report.results {
            assert!(r.results > 0);
            assert!(r.rmse < 1e-6, "{} rmse {}", r.method.tag(), r.rmse);
        }
    }

    #[test]
    fn sym_and_jd_agree_to_all_printed_digits() {
        let img = fixtures::textured_board(128, 128, 45);
        let cfg = small_config();
        let report = run_synthetic_on(&img, &cfg).unwrap();
        let get = |m: &str| {
            report
                .results
                .iter()
                .find(|r| r.method.tag() == m)
                .unwrap()
        };
        let sym = format!("{:.6}", get("sym").rmse);
        let jd = format!("{:.6}", get("jd").rmse);
        assert_eq!(sym, jd);
        assert_eq!(get("sym").results, get("jd").results);
    }

    #[test]
    fn csv_is_deterministic_modulo_timing() {
        let img = fixtures::textured_board(96, 96, 46);
        let mut cfg = small_config();
        cfg.max_corners = 4;
        cfg.num_test_warps = 5;
        let strip = |csv: &str| -> String {
            csv.lines()
                .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let a = run_synthetic_on(&img, &cfg).unwrap().to_csv();
        let b = run_synthetic_on(&img, &cfg).unwrap().to_csv();
        assert_eq!(strip(&a), strip(&b));
        // Counts reconcile in the footer.
        let footer = a.lines().last().unwrap();
        assert!(footer.starts_with("all,"));
        let fields: Vec<&str> = footer.split(',').collect();
        let cells: usize = fields[2].parse().unwrap();
        let results: usize = fields[3].parse().unwrap();
        let skips: usize = fields[4].parse().unwrap();
        assert_eq!(cells, results + skips);
    }

    #[test]
    fn error_prediction_produces_finite_rows() {
        let img = fixtures::textured_board(128, 128, 47);
        let mut cfg = small_config();
        cfg.noise_sigma = 0.03;
        cfg.num_test_warps = 10;
        let report = run_error_prediction_on(&img, &cfg).unwrap();
        assert!(report.rows.len() >= 3);
        for &(_, _, _, p, m) in &report.rows {
            assert!(p.is_finite() && m.is_finite());
            assert!(p >= -1e-10 && m >= 0.0);
        }
        let csv = report.to_csv();
        assert!(csv.lines().last().unwrap().starts_with("spearman,"));
    }

    #[test]
    fn sweep_emits_rows_per_value_and_method() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("board.pgm");
        crate::imaging::save_pgm(&fixtures::textured_board(96, 96, 48), &path).unwrap();
        let mut cfg = small_config();
        cfg.image = path;
        cfg.max_corners = 3;
        cfg.num_test_warps = 4;
        cfg.methods = vec![Method::Sym, Method::Jd];
        let csv = run_sweep(&cfg, SweepAxis::M, &[100.0, 200.0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "m,method,rmse,train_ms,refine_ms");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("100,sym,"));
        assert!(lines[4].starts_with("200,jd,"));
    }
}
