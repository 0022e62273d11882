//! Config-driven experiments: simulation runs, convergence studies and
//! verification suites, with CSV/JSON outputs and a hashed manifest.

mod config;
mod families;
mod output;
mod runners;
mod verify;

pub use config::{
    ConvergeConfig, ExperimentConfig, Faults, NoiseConfig, OptsConfig, OutputConfig, OutputFormat,
    ProblemConfig, RunConfig, RunRegime, VerifyConfig, CONFIG_VERSION,
};
pub use families::FamilyConfig;
pub use output::{sha256_hex, FileEntry, Manifest, SeedFailure, SeedLifetime, MANIFEST_SCHEMA_VERSION};
pub use runners::{
    doleans_dade, log_log_slope, run_converge, run_simulate, ConvergenceRow, ConvergenceTable, Oracle,
    SeedOutcome, SimulateSummary,
};
pub use verify::{run_verify, Check, Suite, SuiteReport, VerifyReport};
