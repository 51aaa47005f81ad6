//! The Monte-Carlo convergence experiment.
//!
//! One sensor stream is generated from the master seed and shared by every
//! trial. Trial `k` perturbs the initial orientation and velocity with a
//! draw seeded by [`trial_seed`], then runs each selected filter from that
//! same initial mean and covariance. Trials run in parallel and are merged
//! in trial order, so results do not depend on scheduling.

use crate::config::{ConfigError, ExperimentConfig, FilterSelection};
use crate::driver::{replay, DriverOptions, Row};
use crate::estimator::{make_estimator, FilterKind};
use crate::metrics::{convergence_time, summarize, FilterSummary, TrialOutcome};
use inekf::lie::{euler_from_rotation, rotation_from_euler};
use inekf::sim::{generate, InitialDraw, SensorStream, SimError, TruthRecord};
use inekf::{ImuBias, NavState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// Seed of trial `k`: the first word of ChaCha20 stream `k + 1` keyed by
/// the master seed. Stream 0 is left to the sensor noise.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(trial as u64 + 1);
    rng.random()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub filter: FilterKind,
    pub rows: Vec<Row>,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Ordered by trial, then filter.
    pub records: Vec<TrialRecord>,
    pub outcomes: Vec<TrialOutcome>,
    pub summaries: Vec<FilterSummary>,
}

impl ExperimentResult {
    pub fn summary(&self, kind: FilterKind) -> Option<&FilterSummary> {
        self.summaries.iter().find(|s| s.filter == kind)
    }
}

pub fn filter_kinds(selection: FilterSelection) -> Vec<FilterKind> {
    match selection {
        FilterSelection::Riekf => vec![FilterKind::Riekf],
        FilterSelection::Qekf => vec![FilterKind::Qekf],
        FilterSelection::Both => vec![FilterKind::Riekf, FilterKind::Qekf],
    }
}

/// The shared truth and sensor stream of an experiment.
pub fn simulate(config: &ExperimentConfig) -> Result<(TruthRecord, SensorStream), SimError> {
    let mut gait = config.gait;
    gait.seed = config.seed;
    generate(&gait)
}

/// Initial mean: the true pose at the first sample with its Euler angles
/// and velocity offset by `draw`, no contacts, and zero bias.
pub fn initial_nav(truth: &TruthRecord, draw: &InitialDraw) -> NavState {
    let start = &truth.samples[0].nav;
    let (roll, pitch, yaw) = euler_from_rotation(&start.rotation);
    let rotation = rotation_from_euler(roll + draw.euler.x, pitch + draw.euler.y, yaw + draw.euler.z);
    NavState::new(rotation, start.velocity + draw.velocity, start.position)
}

pub fn driver_options(config: &ExperimentConfig) -> DriverOptions {
    DriverOptions {
        legs: config.gait.legs,
        encoder_std: config.filter_config.noise.encoder_std,
        log_every: config.log_every,
        nees: true,
    }
}

pub fn run_trial(
    config: &ExperimentConfig,
    truth: &TruthRecord,
    stream: &SensorStream,
    trial: usize,
    filter: FilterKind,
) -> TrialRecord {
    let seed = trial_seed(config.seed, trial);
    let draw = config.sampler.draw(seed);
    let nav = initial_nav(truth, &draw);
    let mut estimator = make_estimator(filter, config.filter_config, nav, ImuBias::default(), &config.initial_std);
    let replayed = replay(estimator.as_mut(), stream, truth, &driver_options(config));
    TrialRecord {
        trial,
        seed,
        filter,
        rows: replayed.rows,
        diverged: replayed.diverged,
    }
}

/// Runs every trial against a given stream and summarizes them.
pub fn run_with_stream(config: &ExperimentConfig, truth: &TruthRecord, stream: &SensorStream) -> ExperimentResult {
    let kinds = filter_kinds(config.filter);
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .flat_map_iter(|k| {
            kinds
                .iter()
                .map(|&kind| run_trial(config, truth, stream, k, kind))
                .collect::<Vec<_>>()
        })
        .collect();

    let outcomes: Vec<TrialOutcome> = records
        .iter()
        .map(|r| TrialOutcome {
            trial: r.trial,
            seed: r.seed,
            filter: r.filter,
            convergence_time: if r.diverged.is_some() {
                None
            } else {
                convergence_time(&r.rows, &config.convergence)
            },
            diverged: r.diverged.clone(),
        })
        .collect();

    let final_from = config.gait.duration - config.final_window;
    let summaries = kinds
        .iter()
        .map(|&kind| {
            let trials = records
                .iter()
                .zip(&outcomes)
                .filter(|(r, _)| r.filter == kind)
                .map(|(r, o)| (o, r.rows.as_slice()));
            summarize(kind, trials, final_from)
        })
        .collect();

    ExperimentResult {
        records,
        outcomes,
        summaries,
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let (truth, stream) = simulate(config)?;
    Ok(run_with_stream(config, &truth, &stream))
}
