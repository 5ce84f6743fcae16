//! Experiment driver: config parsing, hypothesis checks, run orchestration and output.

mod config;
mod hypotheses;
mod initial;
mod output;
mod run;

pub use config::{
    parse_config, ConfigError, ConfigErrors, DiagnosticsConfig, ExperimentConfig, InitialCondition,
    Mode, OutputConfig, SweepAxis,
};
pub use hypotheses::{
    carlson_levin_threshold, check_hypotheses, HypothesisReport, Status, Verdict,
};
pub use initial::initial_density;
pub use output::{fmt_f64, DiagnosticOutcome, EmittedFile, RunManifest, Severity};
pub use run::{
    config_hash, convergence_study, observed_orders, output_root, run, run_id, run_in,
    ConvergenceTable, ExperimentError, ExperimentResult, LevelRow, OUTPUT_ROOT_VAR, QUANTITIES,
};
