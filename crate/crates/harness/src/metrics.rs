//! Convergence and accuracy metrics over logged rows.

use crate::config::ConvergenceCriteria;
use crate::driver::Row;
use crate::estimator::FilterKind;

/// Whether a row meets the convergence thresholds.
pub fn within_thresholds(row: &Row, c: &ConvergenceCriteria) -> bool {
    let (roll, pitch) = row.tilt_error();
    roll.abs() < c.angle_deg
        && pitch.abs() < c.angle_deg
        && row.body_velocity_error().amax() < c.velocity
}

/// Start of the first run of rows that stays within the thresholds for at
/// least `dwell` seconds. `None` if no run lasts that long.
pub fn convergence_time(rows: &[Row], c: &ConvergenceCriteria) -> Option<f64> {
    let mut start: Option<f64> = None;
    for row in rows {
        if within_thresholds(row, c) {
            let s = *start.get_or_insert(row.t);
            if row.t - s >= c.dwell {
                return Some(s);
            }
        } else {
            start = None;
        }
    }
    None
}

/// Linear-interpolation quantile of sorted data, `q ∈ [0, 1]`. Infinite
/// entries sort last and propagate when interpolated.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// RMS of roll error, pitch error (degrees) and body-velocity error norm
/// (m/s) over rows with `t ≥ from`. Yaw and absolute position are
/// unobservable and left out.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FinalErrors {
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub velocity: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct SquaredSums {
    roll: f64,
    pitch: f64,
    velocity: f64,
    n: usize,
}

impl SquaredSums {
    fn add_rows(&mut self, rows: &[Row], from: f64) {
        for row in rows.iter().filter(|r| r.t >= from) {
            let (roll, pitch) = row.tilt_error();
            self.roll += roll * roll;
            self.pitch += pitch * pitch;
            self.velocity += row.body_velocity_error().norm_squared();
            self.n += 1;
        }
    }

    fn finish(&self) -> FinalErrors {
        if self.n == 0 {
            return FinalErrors {
                roll_deg: f64::NAN,
                pitch_deg: f64::NAN,
                velocity: f64::NAN,
                samples: 0,
            };
        }
        let n = self.n as f64;
        FinalErrors {
            roll_deg: (self.roll / n).sqrt(),
            pitch_deg: (self.pitch / n).sqrt(),
            velocity: (self.velocity / n).sqrt(),
            samples: self.n,
        }
    }
}

pub fn final_errors(rows: &[Row], from: f64) -> FinalErrors {
    let mut sums = SquaredSums::default();
    sums.add_rows(rows, from);
    sums.finish()
}

/// Outcome of one filter in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub filter: FilterKind,
    pub convergence_time: Option<f64>,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub filter: FilterKind,
    pub trials: usize,
    pub converged: usize,
    pub diverged: usize,
    /// Convergence-time quantiles with unconverged trials counted as +∞.
    pub median_time: f64,
    pub q25_time: f64,
    pub q75_time: f64,
    /// Pooled over non-diverged trials.
    pub final_errors: FinalErrors,
}

impl FilterSummary {
    pub fn converged_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.converged as f64 / self.trials as f64
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q75_time - self.q25_time
    }
}

/// Summarizes the trials of one filter. `final_from` is the start of the
/// trailing window for the RMS errors.
pub fn summarize<'a>(
    filter: FilterKind,
    trials: impl IntoIterator<Item = (&'a TrialOutcome, &'a [Row])>,
    final_from: f64,
) -> FilterSummary {
    let mut times = Vec::new();
    let mut diverged = 0;
    let mut sums = SquaredSums::default();
    for (outcome, rows) in trials {
        debug_assert_eq!(outcome.filter, filter);
        times.push(outcome.convergence_time.unwrap_or(f64::INFINITY));
        if outcome.diverged.is_some() {
            diverged += 1;
        } else {
            sums.add_rows(rows, final_from);
        }
    }
    times.sort_by(f64::total_cmp);
    FilterSummary {
        filter,
        trials: times.len(),
        converged: times.iter().filter(|t| t.is_finite()).count(),
        diverged,
        median_time: quantile(&times, 0.5),
        q25_time: quantile(&times, 0.25),
        q75_time: quantile(&times, 0.75),
        final_errors: sums.finish(),
    }
}
