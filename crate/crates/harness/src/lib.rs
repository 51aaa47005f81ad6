//! Monte-Carlo convergence experiment comparing the right-invariant EKF with
//! the quaternion EKF on simulated walking data.
//!
//! [`experiment::run_experiment`] generates one shared sensor stream,
//! replays it through both filters from many randomly perturbed initial
//! estimates and summarizes how quickly each filter converges.

pub mod config;
pub mod driver;
pub mod estimator;
pub mod experiment;
pub mod metrics;
pub mod output;

pub use config::{ConfigError, ConfigFile, ConvergenceCriteria, ExperimentConfig, FilterSelection, Preset};
pub use driver::{replay, DriverOptions, Replay, Row};
pub use estimator::{make_estimator, nees, Estimator, FilterKind};
pub use experiment::{run_experiment, run_with_stream, trial_seed, ExperimentResult, HarnessError, TrialRecord};
pub use metrics::{convergence_time, FilterSummary, TrialOutcome};
