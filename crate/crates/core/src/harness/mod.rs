//! Experiment orchestration: single runs of either study, seeded sweeps,
//! and aggregation into summary tables.
//!
//! A run directory holds `config.toml` (effective configuration),
//! `loss.csv`, `record.json`, `network.ckpt`, plus `eval.csv` for vehicle
//! runs and `curve.csv` for regression runs. A study directory holds one
//! run directory per `<kind>/seed-<n>` and a `summary.json`.

pub mod config;
pub mod record;
pub mod regress;
pub mod study;
pub mod vehicle;

pub use config::{PenaltyChoice, RunConfig, Study};
pub use record::{is_sufficient_feasible, EvalBlock, RunRecord, RunStatus, TrajectoryScore};
pub use regress::{run_regress1d, RegressOutcome};
pub use study::{execute_run, report, run_study, summarize, StudyConfig, StudySummary};
pub use vehicle::{run_vehicle, VehicleOutcome};
