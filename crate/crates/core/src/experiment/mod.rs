//! Experiment drivers: error/bound sweeps, timing studies and the invariant
//! verification suite.

mod config;
mod manifest;
mod sweep;
mod timing;
mod verify;

pub use config::{ExperimentConfig, CONFIG_KEYS};
pub use manifest::write_manifest;
pub use sweep::{
    compare_with_truth, read_sweep_csv, run_sweep, summarize, write_sweep_csv, MuRecord, SweepReport, SweepRow,
    SWEEP_COLUMNS,
};
pub use timing::{run_timing_mesh, run_timing_per_n, time_artifact, write_timing_csv, TimingRow, TIMING_COLUMNS};
pub use verify::{
    corrupt_gramian, cone_property_violations, lcp_oracle_deviation, reproduction_errors, residual_consistency,
    run_verify, truth_equivalence, CheckResult, ResidualComparison, VerifyOptions, VerifyReport,
};
