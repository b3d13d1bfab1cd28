//! Per-image optimization: objective evaluation, RAdam steps, output
//! averaging, zero-crossing stopping and trace logging.

mod config;
mod ema;
mod floats;
mod radam;
mod run;
mod stopping;
mod trace;

pub use config::{BaselineInput, Objective, RunConfig};
pub use ema::ema_update;
pub use radam::RAdam;
pub use run::{baseline_input, evaluate_objective, optimize, run_baseline_dip, DenoiseResult, Evaluation, PeakIterate};
pub use stopping::{zero_crossing_index, ZeroCrossing};
pub use trace::{RunTrace, StopReason, TraceRecord, CSV_COLUMNS};
