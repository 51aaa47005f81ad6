//! Replays a sensor stream through an estimator.
//!
//! The most recent IMU sample is held constant until the next event, and
//! the filter is propagated to every event time. A leg that touches down is
//! added as a contact at the first encoder sample at or after the touchdown
//! flag; a leg that lifts off is marginalized immediately. Encoder samples
//! update all tracked contacts jointly.

use crate::estimator::Estimator;
use inekf::kinematics::LegModel;
use inekf::lie::{euler_from_rotation, wrap_angle, Vec3};
use inekf::sim::{SensorEvent, SensorStream, TruthRecord, LEG_COUNT};
use inekf::{FilterError, ImuBias, ImuSample, NavState};

/// One logged instant, taken after all events at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    /// (roll, pitch, yaw), degrees.
    pub true_rpy: Vec3,
    pub est_rpy: Vec3,
    /// Velocity in each state's own body frame, `Rᵀv` and `R̂ᵀv̂`.
    pub true_body_vel: Vec3,
    pub est_body_vel: Vec3,
    pub position_error: f64,
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
    /// NaN when the projected covariance is not positive definite.
    pub nees: f64,
    /// Degrees of freedom of `nees`, zero when it is not computed.
    pub nees_dof: usize,
}

impl Row {
    /// Roll and pitch errors, degrees, wrapped to (−180, 180].
    pub fn tilt_error(&self) -> (f64, f64) {
        let wrap = |a: f64| wrap_angle(a.to_radians()).to_degrees();
        let d = self.est_rpy - self.true_rpy;
        (wrap(d.x), wrap(d.y))
    }

    pub fn body_velocity_error(&self) -> Vec3 {
        self.est_body_vel - self.true_body_vel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub rows: Vec<Row>,
    /// Set when the filter failed or produced a non-finite state; rows stop
    /// at the last good instant.
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverOptions {
    pub legs: [LegModel; LEG_COUNT],
    /// Encoder noise assumed by the measurement model, rad.
    pub encoder_std: f64,
    pub log_every: usize,
    /// Compute the NEES column.
    pub nees: bool,
}

pub fn replay(
    estimator: &mut dyn Estimator,
    stream: &SensorStream,
    truth: &TruthRecord,
    options: &DriverOptions,
) -> Replay {
    let mut rows = Vec::new();
    match run(estimator, stream, truth, options, &mut rows) {
        Ok(()) => Replay { rows, diverged: None },
        Err(e) => Replay {
            rows,
            diverged: Some(e.to_string()),
        },
    }
}

fn run(
    est: &mut dyn Estimator,
    stream: &SensorStream,
    truth: &TruthRecord,
    options: &DriverOptions,
    rows: &mut Vec<Row>,
) -> Result<(), FilterError> {
    let mut held: Option<ImuSample> = None;
    let mut last_t = stream.first().map_or(0.0, SensorEvent::timestamp);
    let mut pending = [false; LEG_COUNT];
    let mut imu_index = 0usize;

    for event in stream {
        let t = event.timestamp();
        if t > last_t {
            if let Some(imu) = &held {
                est.propagate(imu, t - last_t)?;
            }
            last_t = t;
        }
        match event {
            SensorEvent::Contact(flag) => {
                if flag.in_contact {
                    pending[flag.leg] = !est.tracks(flag.leg);
                } else {
                    pending[flag.leg] = false;
                    if est.tracks(flag.leg) {
                        est.remove_contact(flag.leg)?;
                    }
                }
            }
            SensorEvent::Encoder(sample) => {
                let meas = |leg: usize| {
                    options.legs[leg].measurement(leg, &sample.angles[leg], options.encoder_std)
                };
                let tracked: Vec<_> = (0..LEG_COUNT).filter(|&l| est.tracks(l)).map(meas).collect();
                est.update(&tracked)?;
                for leg in 0..LEG_COUNT {
                    if pending[leg] {
                        est.add_contact(&meas(leg))?;
                        pending[leg] = false;
                    }
                }
            }
            SensorEvent::Imu(sample) => {
                held = Some(*sample);
                let nav = est.nav();
                if !nav.is_finite() {
                    return Err(FilterError::NonFinite("state"));
                }
                if imu_index.is_multiple_of(options.log_every) {
                    rows.push(log_row(est, &nav, truth, imu_index, t, options.nees));
                }
                imu_index += 1;
            }
        }
    }
    Ok(())
}

fn log_row(
    est: &dyn Estimator,
    nav: &NavState,
    truth: &TruthRecord,
    imu_index: usize,
    t: f64,
    with_nees: bool,
) -> Row {
    let sample = &truth.samples[imu_index];
    debug_assert!((sample.timestamp - t).abs() < 1e-9);
    let true_nav = &sample.nav;
    let rpy = |r| {
        let (roll, pitch, yaw) = euler_from_rotation(r);
        Vec3::new(roll, pitch, yaw).map(f64::to_degrees)
    };
    let bias: ImuBias = est.bias();
    let (nees, nees_dof) = if with_nees {
        // Truth with the estimator's contact set. Tracked legs are always in
        // stance, so their true foot positions are fixed points.
        let mut matched = NavState::new(true_nav.rotation, true_nav.velocity, true_nav.position);
        for &id in nav.contacts.keys() {
            matched.contacts.insert(id, truth.trajectory.foot_position(id, t));
        }
        est.nees(&matched, &truth.bias).unwrap_or((f64::NAN, 0))
    } else {
        (f64::NAN, 0)
    };
    Row {
        t,
        true_rpy: rpy(&true_nav.rotation),
        est_rpy: rpy(&nav.rotation),
        true_body_vel: true_nav.rotation.transpose() * true_nav.velocity,
        est_body_vel: nav.rotation.transpose() * nav.velocity,
        position_error: (nav.position - true_nav.position).norm(),
        gyro_bias: bias.gyro,
        accel_bias: bias.accel,
        nees,
        nees_dof,
    }
}
