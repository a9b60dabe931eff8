//! Benchmark harness: corner detection, per-method training, test-warp
//! evaluation, RMSE and timing aggregation, CSV output.

mod config;
mod runner;
mod stats;

pub use config::{parse_pattern, parse_ranges, BenchConfig, Method, SweepAxis};
pub use runner::{
    run_error_prediction, run_error_prediction_on, run_sweep, run_synthetic, run_synthetic_on,
    synthesize_view, ErrorPredictionReport, MethodResult, SyntheticReport,
};
pub use stats::{median, spearman_rho};
