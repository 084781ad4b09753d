//! End-to-end experiment: environment, shaping, MaxEnt baseline, DQN job
//! grid and bootstrap aggregation.

mod bootstrap;
mod pipeline;
mod results;

pub use bootstrap::{bootstrap_ci, stable_mean};
pub use pipeline::{
    persist, prepare, result_grid, run_experiment, run_in_memory, train_all, ExperimentConfig, ExperimentOutput,
    MaxEntReport, MonteCarloConfig, PipelineReport, Prepared, AGGREGATE_FILE, RAW_FILE, REPORT_FILE,
};
pub use results::{
    aggregate_csv, aggregate_curves, final_window_returns, first_episode_reaching, raw_csv, read_aggregate_csv,
    read_raw_csv, sort_rows, write_aggregate_csv, write_raw_csv, AggregateRow, ResultGrid, ResultRow, Variant,
    AGGREGATE_HEADER, RAW_HEADER,
};
