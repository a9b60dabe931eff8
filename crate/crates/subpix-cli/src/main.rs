//! Command-line front end: benchmark runs, symbolic model files, and
//! one-off keypoint refinement.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on runtime
//! errors (missing files, malformed data, degenerate patches).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subpix::bench::{
    self, parse_pattern, parse_ranges, BenchConfig, Method, SweepAxis, SyntheticReport,
};
use subpix::energy::{esm_precompute, esm_refine, iclk_precompute, iclk_refine};
use subpix::error::{Error, Result};
use subpix::fixtures;
use subpix::imaging::{load_pgm, save_pgm, PatchSpec};
use subpix::lp::{
    build_dct_mapping, build_error_matrix, learn_dct, learn_hp, learn_hpdct, learn_jd, predict,
    LearnerTag, LinearPredictor, Ridge,
};
use subpix::symbolic::{
    extract_bbox, learn_symbolic, learn_symbolic_dct_with, load_model, save_model, SymbolicModel,
};
use subpix::warp::{sample_warps, AffineParams, WarpRanges};

#[derive(Parser)]
#[command(name = "subpix", version, about = "Subpixel patch alignment benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark runs on a PGM image.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Symbolic model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Refine one keypoint with one method and print the six warp
    /// parameters.
    Refine(RefineArgs),
    /// Write a synthetic test image.
    Fixture(FixtureArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Train every configured method per corner, evaluate seeded test
    /// warps, report RMSE and timing per method as CSV.
    Synthetic(ConfigFlags),
    /// Repeat the synthetic run along one axis.
    Sweep(SweepArgs),
    /// Per-keypoint expected error versus measured test error.
    Errpred(ConfigFlags),
}

#[derive(Args)]
struct SweepArgs {
    /// Axis to vary: m, side, or var (max translation).
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long)]
    values: String,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Build symbolic tensors and write them to a model file.
    Build(ModelBuildArgs),
    /// Print a model file's header and tensor sizes.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct ModelBuildArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 9)]
    side: u32,
    #[arg(long, default_value = "dense")]
    pattern: String,
    #[arg(long, default_value_t = 5000)]
    m: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    train_translation: f64,
    #[arg(long, default_value_t = 0.2)]
    train_linear: f64,
    /// Full 12-number ranges (lo,hi per parameter); overrides the
    /// symmetric options.
    #[arg(long)]
    train_ranges: Option<String>,
    /// Retained DCT coefficients to embed a mapping in the model.
    #[arg(long)]
    dct_r: Option<u32>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    x: i32,
    #[arg(long)]
    y: i32,
    /// iclk, esm, jd, dct-r, hp, hpdct-r, sym, or symdct-r.
    #[arg(long)]
    method: String,
    /// Warp to apply to the patch before refining (6 comma-separated
    /// parameters); the printed estimate should recover it.
    #[arg(long)]
    apply_warp: Option<String>,
    /// Starting parameters (6 comma-separated values, default identity).
    #[arg(long)]
    p0: Option<String>,
    /// Symbolic model file to reuse for sym/symdct.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    /// board, smooth, checker, or noise.
    #[arg(long, default_value = "board")]
    kind: String,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Cell side for the checkerboard.
    #[arg(long, default_value_t = 8)]
    cell: usize,
}

/// Every benchmark config key, overridable on the command line with the
/// same name. Values use the config-file syntax.
#[derive(Args, Default)]
struct ConfigFlags {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    test_warps: Option<String>,
    #[arg(long)]
    train_translation: Option<String>,
    #[arg(long)]
    train_linear: Option<String>,
    #[arg(long)]
    test_translation: Option<String>,
    #[arg(long)]
    test_linear: Option<String>,
    #[arg(long)]
    train_ranges: Option<String>,
    #[arg(long)]
    test_ranges: Option<String>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed_train: Option<String>,
    #[arg(long)]
    seed_test: Option<String>,
    #[arg(long)]
    energy_iters: Option<String>,
    #[arg(long)]
    lp_iters: Option<String>,
    #[arg(long)]
    max_corners: Option<String>,
    #[arg(long)]
    min_corner_score: Option<String>,
    #[arg(long)]
    border_margin: Option<String>,
    #[arg(long)]
    noise_sigma: Option<String>,
    #[arg(long)]
    timing_repeats: Option<String>,
    #[arg(long)]
    ridge_scale: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

impl ConfigFlags {
    fn build(&self, base: BenchConfig) -> Result<BenchConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let overrides: [(&str, &Option<String>); 23] = [
            ("image", &self.image),
            ("side", &self.side),
            ("pattern", &self.pattern),
            ("m", &self.m),
            ("test_warps", &self.test_warps),
            ("train_translation", &self.train_translation),
            ("train_linear", &self.train_linear),
            ("test_translation", &self.test_translation),
            ("test_linear", &self.test_linear),
            ("train_ranges", &self.train_ranges),
            ("test_ranges", &self.test_ranges),
            ("methods", &self.methods),
            ("seed_train", &self.seed_train),
            ("seed_test", &self.seed_test),
            ("energy_iters", &self.energy_iters),
            ("lp_iters", &self.lp_iters),
            ("max_corners", &self.max_corners),
            ("min_corner_score", &self.min_corner_score),
            ("border_margin", &self.border_margin),
            ("noise_sigma", &self.noise_sigma),
            ("timing_repeats", &self.timing_repeats),
            ("ridge_scale", &self.ridge_scale),
            ("output", &self.output),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.apply_key(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Bench(BenchCommand::Synthetic(flags)) => {
            let cfg = flags.build(BenchConfig::default())?;
            let report = bench::run_synthetic(&cfg)?;
            emit_csv(&cfg, report.to_csv())?;
            print_summary(&report);
            Ok(())
        }
        Command::Bench(BenchCommand::Sweep(args)) => {
            let cfg = args.flags.build(BenchConfig::default())?;
            let axis = SweepAxis::parse(&args.axis)?;
            let values: Vec<f64> = args
                .values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("invalid values '{}'", args.values)))?;
            let csv = bench::run_sweep(&cfg, axis, &values)?;
            emit_csv(&cfg, csv)
        }
        Command::Bench(BenchCommand::Errpred(flags)) => {
            // Error prediction is only interesting with observation noise;
            // default to the pilot level unless overridden.
            let mut base = BenchConfig::default();
            base.noise_sigma = 0.03;
            let cfg = flags.build(base)?;
            let report = bench::run_error_prediction(&cfg)?;
            emit_csv(&cfg, report.to_csv())?;
            println!("keypoints: {}", report.rows.len());
            println!("spearman rho: {:.6}", report.spearman);
            Ok(())
        }
        Command::Model(ModelCommand::Build(args)) => model_build(args),
        Command::Model(ModelCommand::Inspect { path }) => model_inspect(&path),
        Command::Refine(args) => refine(args),
        Command::Fixture(args) => fixture(args),
    }
}

fn emit_csv(cfg: &BenchConfig, csv: String) -> Result<()> {
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn print_summary(report: &SyntheticReport) {
    println!(
        "corners: {}, tensor build: {:.2} ms",
        report.corners.len(),
        report.tensor_build_ms
    );
    println!("{:<12} {:>10} {:>12} {:>12} {:>8}", "method", "rmse", "train_ms", "refine_ms", "skips");
    for r in &report.results {
        println!(
            "{:<12} {:>10.6} {:>12.4} {:>12.4} {:>8}",
            r.method.tag(),
            r.rmse,
            r.train_ms,
            r.refine_ms,
            r.skips
        );
    }
}

fn model_build(args: ModelBuildArgs) -> Result<()> {
    let pattern = parse_pattern(&args.pattern)?;
    let ranges = match &args.train_ranges {
        Some(list) => parse_ranges(list)?,
        None => WarpRanges::symmetric(args.train_translation, args.train_linear)?,
    };
    let model = SymbolicModel::build(args.side, pattern, &ranges, args.m, args.seed, args.dct_r)?;
    save_model(&model, &args.out)?;
    println!(
        "wrote {} (n={}, l={}, linear entries {}, quadratic entries {})",
        args.out.display(),
        model.patch_pixel_count(),
        model.box_pixel_count(),
        model.linear.entries.len(),
        model.quadratic.entries.len()
    );
    Ok(())
}

fn model_inspect(path: &PathBuf) -> Result<()> {
    let model = load_model(path)?;
    println!("side: {}", model.side);
    println!("pattern: {}", match model.pattern {
        subpix::imaging::SamplePattern::Dense => "dense".to_string(),
        subpix::imaging::SamplePattern::Strided(s) => format!("strided-{s}"),
    });
    println!("patch pixels: {}", model.patch_pixel_count());
    println!("box: left {} right {} top {} bottom {} ({} pixels)",
        model.bbox.left, model.bbox.right, model.bbox.top, model.bbox.bottom,
        model.box_pixel_count());
    println!("warps: {} (seed {})", model.num_warps, model.seed);
    for i in 0..6 {
        println!(
            "range p{i}: [{}, {}]",
            model.ranges.lo[i], model.ranges.hi[i]
        );
    }
    println!("trace ppt: {}", model.trace_ppt);
    println!("dct retained: {}", model.dct.as_ref().map_or(0, |d| d.retained));
    println!("linear entries: {}", model.linear.entries.len());
    println!("quadratic entries: {}", model.quadratic.entries.len());
    Ok(())
}

fn parse_params(list: &str) -> Result<AffineParams> {
    let parts: Vec<f64> = list
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid parameters '{list}'")))?;
    if parts.len() != 6 {
        return Err(Error::Config(format!(
            "expected 6 parameters, got {}",
            parts.len()
        )));
    }
    Ok(AffineParams([
        parts[0], parts[1], parts[2], parts[3], parts[4], parts[5],
    ]))
}

fn refine(args: RefineArgs) -> Result<()> {
    let method = Method::parse(&args.method)?;
    let cfg = args.flags.build(BenchConfig::default())?;
    let img = load_pgm(&cfg.image)?;
    let spec = PatchSpec::new((args.x, args.y), cfg.side, cfg.pattern)?;
    let p0 = match &args.p0 {
        Some(list) => parse_params(list)?,
        None => AffineParams::identity(),
    };

    // Target: either the image itself or a synthesized warped observation
    // of the patch.
    let (target, center) = match &args.apply_warp {
        Some(list) => {
            let q = parse_params(list)?;
            let half = (cfg.side as i32 / 2) * 3 + 4;
            let view = bench::synthesize_view(&img, (args.x as u32, args.y as u32), &q, half, None)?;
            (view, (half, half))
        }
        None => (img.clone(), (args.x, args.y)),
    };

    let ridge = Ridge::ScaledTrace(cfg.ridge_scale);
    let result = match method {
        Method::Iclk => {
            let pre = iclk_precompute(&img, &spec)?;
            iclk_refine(&pre, &target, center, p0, cfg.energy_iters, subpix::energy::DEFAULT_TOL)?
        }
        Method::Esm => {
            let pre = esm_precompute(&img, &spec)?;
            esm_refine(&pre, &target, center, p0, cfg.energy_iters, subpix::energy::DEFAULT_TOL)?
        }
        Method::Sym | Method::SymDct(_) => {
            let model = match &args.model {
                Some(path) => {
                    let m = load_model(path)?;
                    if m.side != cfg.side {
                        return Err(Error::Config(format!(
                            "model side {} does not match configured side {}",
                            m.side, cfg.side
                        )));
                    }
                    m
                }
                None => SymbolicModel::build(
                    cfg.side,
                    cfg.pattern,
                    &cfg.train_ranges,
                    cfg.num_train_warps as u32,
                    cfg.seed_train,
                    method.dct_r(),
                )?,
            };
            let u = extract_bbox(&img, spec.center, &model.bbox)?;
            let lp = match method {
                Method::Sym => learn_symbolic(&model, &u, ridge)?,
                Method::SymDct(r) => {
                    let map = match &model.dct {
                        Some(map) if map.retained == r => map.clone(),
                        _ => build_dct_mapping(cfg.side, r)?,
                    };
                    learn_symbolic_dct_with(&model, &map, &u, ridge)?
                }
                _ => unreachable!(),
            };
            predict(&lp, &target, center, p0, cfg.lp_iters)?
        }
        Method::Jd | Method::Dct(_) | Method::Hp | Method::HpDct(_) => {
            let warps = sample_warps(&cfg.train_ranges, cfg.num_train_warps, cfg.seed_train);
            let errors = build_error_matrix(&img, &spec, &warps)?;
            let (matrix, tag) = match method {
                Method::Jd => (learn_jd(&warps, &errors, ridge)?, LearnerTag::Jd),
                Method::Dct(r) => (
                    learn_dct(&warps, &errors, &build_dct_mapping(cfg.side, r)?, ridge)?,
                    LearnerTag::Dct(r),
                ),
                Method::Hp => (learn_hp(&warps, &errors, ridge)?, LearnerTag::Hp),
                Method::HpDct(r) => (
                    learn_hpdct(&warps, &errors, &build_dct_mapping(cfg.side, r)?, ridge)?,
                    LearnerTag::HpDct(r),
                ),
                _ => unreachable!(),
            };
            let lp = LinearPredictor {
                matrix,
                patch: subpix::imaging::TemplatePatch::extract(&img, &spec)?,
                side: cfg.side,
                pattern: cfg.pattern,
                ranges: cfg.train_ranges,
                num_warps: cfg.num_train_warps as u32,
                learner: tag,
            };
            predict(&lp, &target, center, p0, cfg.lp_iters)?
        }
    };

    // Report the warp estimated to have been applied to the patch.
    let est = result.params.invert()?;
    println!(
        "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        est.0[0], est.0[1], est.0[2], est.0[3], est.0[4], est.0[5]
    );
    log::info!(
        "iterations: {}, residual: {:.3e}, converged: {}",
        result.iterations,
        result.residual,
        result.converged
    );
    Ok(())
}

fn fixture(args: FixtureArgs) -> Result<()> {
    let img = match args.kind.as_str() {
        "board" => fixtures::textured_board(args.width, args.height, args.seed),
        "smooth" => fixtures::smooth_board(args.width, args.height, args.seed),
        "checker" => fixtures::checkerboard(args.width, args.height, args.cell),
        "noise" => fixtures::noise(args.width, args.height, args.seed),
        other => return Err(Error::Config(format!("unknown fixture kind '{other}'"))),
    };
    save_pgm(&img, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
