//! Experiment driver: configuration, the train/validate loop, and
//! cross-run comparison.
//!
//! A run directory holds `run.json`, `metrics.jsonl` (one row per
//! iteration), `timing.jsonl`, `updates.jsonl`, optional `cl.jsonl`,
//! buffer dumps under `buffers/`, and final checkpoints.

mod compare;
mod config;
mod run;

pub use compare::{aggregate_runs, compare_runs, mean_std, summarize_run, MethodSummary, RunSummary};
pub use config::{ExperimentConfig, FilterOverrides, IsbConfig, OutputConfig};
pub use run::{
    buffer_file, read_metrics, run_experiment, MetricsRow, RunInfo, RunOutcome, TimingRow, BUFFER_DIR, CL_FILE,
    METRICS_FILE, RUN_FILE, TIMING_FILE, UPDATES_FILE,
};
