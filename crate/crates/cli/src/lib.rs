//! Library surface of the `spdefind` command-line tool: configuration,
//! pipeline stages and reporting. The binary in `main.rs` is a thin argument
//! parser over [`pipeline`].

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, PRESET_NAMES};
pub use pipeline::{
    cmd_discover, cmd_evaluate, cmd_run_paper, cmd_simulate, discover_from_field, run_case,
    CaseOutcome, DiscoveryOutput, EvaluationOutput,
};
pub use report::{Metrics, RunReport, Timings};
