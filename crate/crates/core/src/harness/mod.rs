//! Monte Carlo experiments over channel, dataset and noise draws, with CSV
//! persistence of per-trial rows and per-group summaries.

mod commands;
mod experiment;
mod summary;

pub use commands::{build_scenario, optimize_command, train_command, OptimizeReport, Scenario, TrainReport};
pub use experiment::{
    derived_rng, read_results, run_experiment, write_results, ExperimentSpec, ExtractorKind, FigureId, ResultRow,
    Scheme, DEFAULT_REG_COEFFICIENT, DEFAULT_TRIALS, RESULT_HEADER,
};
pub use summary::{aggregate_trials, write_summary, SummaryRow, SUMMARY_HEADER};
