//! Kinematic biped simulator producing ground truth and noisy sensor streams.
//!
//! The body follows a closed-form trajectory (a small settling drop, then a
//! forward walk whose speed ramps smoothly between two values, with gait
//! oscillations and slow posture changes superimposed). Stance feet are
//! pinned exactly in the world; swing feet follow cycloids. Joint angles come
//! from closed-form inverse kinematics of the leg model.
//!
//! Sensor noise is per sample: each IMU sample carries `N(0, σ²)` on every
//! axis with σ taken from [`NoiseParams`], likewise each encoder reading.

pub mod noise;
mod trajectory;

pub use trajectory::{BodyState, ContactTransition, Jet, Trajectory};

use crate::filter::{ImuBias, ImuSample, NavState, NoiseParams, GRAVITY};
use crate::kinematics::{JointAngles, KinematicsError, LegModel};
use crate::lie::{rotation_from_euler, Rot3, Vec3};
use noise::{normal_vec3, symmetric_uniform, NoiseRng};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEG_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid gait configuration: {0}")]
    InvalidConfig(String),
    #[error("leg {leg} cannot reach its foot target at t = {time:.6} s")]
    Unreachable {
        time: f64,
        leg: usize,
        #[source]
        source: KinematicsError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    /// rad
    pub amplitude: f64,
    /// s
    pub period: f64,
}

impl Oscillation {
    pub const NONE: Oscillation = Oscillation {
        amplitude: 0.0,
        period: 1.0,
    };
}

/// Shape of the body motion superimposed on the forward walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyMotion {
    /// Body height above ground after settling, m.
    pub nominal_height: f64,
    /// Initial settling drop, m, completed after `drop_time` s.
    pub drop_height: f64,
    pub drop_time: f64,
    /// Lateral sway amplitude over a two-step cycle, m.
    pub sway: f64,
    /// Vertical bob amplitude over one step, m.
    pub bob: f64,
    /// Gait-frequency roll (two-step), pitch (one-step), yaw (two-step)
    /// amplitudes, rad.
    pub gait_roll: f64,
    pub gait_pitch: f64,
    pub gait_yaw: f64,
    /// The gait oscillations fade in over this time once walking starts, s.
    pub gait_envelope_time: f64,
    /// Slow torso posture changes, active from t = 0.
    pub lean_pitch: Oscillation,
    pub lean_roll: Oscillation,
    pub heading: Oscillation,
}

impl Default for BodyMotion {
    fn default() -> Self {
        Self {
            nominal_height: 0.88,
            drop_height: 0.02,
            drop_time: 0.2,
            sway: 0.02,
            bob: 0.01,
            gait_roll: 0.03,
            gait_pitch: 0.03,
            gait_yaw: 0.05,
            gait_envelope_time: 1.0,
            lean_pitch: Oscillation {
                amplitude: 0.2,
                period: 8.0,
            },
            lean_roll: Oscillation {
                amplitude: 0.15,
                period: 6.0,
            },
            heading: Oscillation {
                amplitude: 0.15,
                period: 9.0,
            },
        }
    }
}

impl BodyMotion {
    /// Standing still at the nominal height.
    pub fn still() -> Self {
        Self {
            drop_height: 0.0,
            sway: 0.0,
            bob: 0.0,
            gait_roll: 0.0,
            gait_pitch: 0.0,
            gait_yaw: 0.0,
            lean_pitch: Oscillation::NONE,
            lean_roll: Oscillation::NONE,
            heading: Oscillation::NONE,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitConfig {
    /// Whether the robot steps at all; a non-walking config stands still on
    /// both feet.
    pub walking: bool,
    /// s
    pub step_duration: f64,
    /// Fraction of each step spent in double support.
    pub double_support: f64,
    /// Forward speed before and after the ramp, m/s.
    pub v_start: f64,
    pub v_end: f64,
    /// Duration of the speed ramp, s.
    pub ramp_time: f64,
    /// Time at which stepping and the speed ramp begin, s.
    pub walk_start: f64,
    /// Swing apex height, m.
    pub step_height: f64,
    pub imu_rate: f64,
    pub encoder_rate: f64,
    pub duration: f64,
    pub seed: u64,
    pub noise: NoiseParams,
    pub true_bias: ImuBias,
    pub gravity: Vec3,
    pub legs: [LegModel; LEG_COUNT],
    pub motion: BodyMotion,
}

impl Default for GaitConfig {
    /// Desk-scale walking scenario: 200 Hz IMU, 500 Hz encoders, 10 s.
    fn default() -> Self {
        Self {
            walking: true,
            step_duration: 0.4,
            double_support: 0.2,
            v_start: 0.0,
            v_end: 0.3,
            ramp_time: 2.0,
            walk_start: 0.2,
            step_height: 0.05,
            imu_rate: 200.0,
            encoder_rate: 500.0,
            duration: 10.0,
            seed: 0,
            noise: NoiseParams::default(),
            true_bias: ImuBias {
                gyro: Vec3::new(0.002, -0.001, 0.003),
                accel: Vec3::new(0.02, 0.01, -0.03),
            },
            gravity: GRAVITY,
            legs: [LegModel::left(), LegModel::right()],
            motion: BodyMotion::default(),
        }
    }
}

impl GaitConfig {
    /// Sensor rates of the hardware platform: 800 Hz IMU, 2 kHz encoders.
    pub fn paper_rates() -> Self {
        Self {
            imu_rate: 800.0,
            encoder_rate: 2000.0,
            ..Self::default()
        }
    }

    /// Standing still on both feet with no body motion.
    pub fn stationary() -> Self {
        Self {
            walking: false,
            v_end: 0.0,
            motion: BodyMotion::still(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.imu_rate) || !positive(self.encoder_rate) {
            return bad("sensor rates must be positive");
        }
        if !positive(self.duration) || !positive(self.step_duration) || !positive(self.ramp_time) {
            return bad("durations must be positive");
        }
        if !(0.0..1.0).contains(&self.double_support) {
            return bad("double-support fraction must lie in [0, 1)");
        }
        if !(self.walk_start >= 0.0) || !self.v_start.is_finite() || !self.v_end.is_finite() {
            return bad("walk start and speeds must be finite");
        }
        if !(self.step_height >= 0.0) || !(self.motion.drop_time >= 0.0) {
            return bad("heights and times must be non-negative");
        }
        if !self.noise.is_valid() {
            return bad("noise standard deviations must be finite and non-negative");
        }
        for leg in &self.legs {
            leg.validate()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

/// Measured joint angles of both legs at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSample {
    pub timestamp: f64,
    pub angles: [JointAngles; LEG_COUNT],
    /// Stance-foot velocity in the contact frame as a noisy pseudo
    /// measurement (the true value is zero), present only for legs in
    /// contact. The filters model this quantity as process noise on the
    /// contact points and do not consume it.
    pub contact_velocity: [Option<Vec3>; LEG_COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactFlag {
    pub timestamp: f64,
    pub leg: usize,
    pub in_contact: bool,
}

/// A time-stamped sensor event. At equal timestamps contact flags come first,
/// then encoders, then the IMU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorEvent {
    Contact(ContactFlag),
    Encoder(EncoderSample),
    Imu(ImuSample),
}

impl SensorEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            SensorEvent::Contact(c) => c.timestamp,
            SensorEvent::Encoder(e) => e.timestamp,
            SensorEvent::Imu(i) => i.timestamp,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            SensorEvent::Contact(_) => 0,
            SensorEvent::Encoder(_) => 1,
            SensorEvent::Imu(_) => 2,
        }
    }
}

pub type SensorStream = Vec<SensorEvent>;

/// Truth at one IMU sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSample {
    pub timestamp: f64,
    pub nav: NavState,
    pub euler: Vec3,
    /// Noise-free, bias-free IMU output: the mean body rate and specific
    /// force over the sample interval `[t, t + 1/imu_rate)`.
    pub omega: Vec3,
    pub specific_force: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub trajectory: Trajectory,
    pub bias: ImuBias,
    pub samples: Vec<TruthSample>,
    /// True joint angles at each encoder time.
    pub joint_angles: Vec<(f64, [JointAngles; LEG_COUNT])>,
}

impl TruthRecord {
    /// True navigation state at any time, with the feet in contact.
    pub fn nav_at(&self, t: f64) -> NavState {
        self.trajectory.nav_at(t)
    }
}

fn sample_times(rate: f64, duration: f64) -> impl Iterator<Item = f64> {
    let n = (duration * rate + 1e-9).floor() as u64;
    (0..=n).map(move |k| k as f64 / rate)
}

/// Mean body rate and specific force over `[t, t + dt]` by three-point
/// Gauss–Legendre quadrature.
///
/// The IMU is modeled as integrating over each sample interval. A filter
/// that holds sample `k` constant over `[t_k, t_{k+1})` then reproduces the
/// true motion increment to third order in `dt`, whereas point samples
/// would lag the truth by half a sample.
fn interval_mean(traj: &Trajectory, t: f64, dt: f64) -> (Vec3, Vec3) {
    let half = 0.5 * dt;
    let node = (0.6_f64).sqrt() * half;
    let mut omega = Vec3::zeros();
    let mut force = Vec3::zeros();
    for (offset, weight) in [(-node, 5.0 / 18.0), (0.0, 8.0 / 18.0), (node, 5.0 / 18.0)] {
        let body = traj.body_at(t + half + offset);
        omega += body.omega * weight;
        force += body.specific_force * weight;
    }
    (omega, force)
}

/// Generates the truth record and the time-ordered sensor stream.
pub fn generate(config: &GaitConfig) -> Result<(TruthRecord, SensorStream), SimError> {
    config.validate()?;
    let traj = Trajectory::new(config);
    let mut rng = NoiseRng::seed_from_u64(config.seed);
    let noise = &config.noise;
    let bias = config.true_bias;

    // Lay out the schedule first so noise is drawn in stream order.
    let mut slots: Vec<(f64, u8, usize)> = Vec::new();
    for leg in 0..LEG_COUNT {
        slots.push((0.0, 0, usize::MAX - leg));
    }
    for (i, tr) in traj.transitions().iter().enumerate() {
        slots.push((tr.time, 0, i));
    }
    slots.extend(sample_times(config.encoder_rate, config.duration).map(|t| (t, 1, 0)));
    slots.extend(sample_times(config.imu_rate, config.duration).map(|t| (t, 2, 0)));
    slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut stream = Vec::with_capacity(slots.len());
    let mut samples = Vec::new();
    let mut joint_angles = Vec::new();
    for (t, kind, index) in slots {
        match kind {
            0 => {
                let flag = if index >= usize::MAX - LEG_COUNT {
                    ContactFlag {
                        timestamp: 0.0,
                        leg: usize::MAX - index,
                        in_contact: traj.in_contact(usize::MAX - index, 0.0),
                    }
                } else {
                    let tr = traj.transitions()[index];
                    ContactFlag {
                        timestamp: tr.time,
                        leg: tr.leg,
                        in_contact: tr.in_contact,
                    }
                };
                stream.push(SensorEvent::Contact(flag));
            }
            1 => {
                let body = traj.body_at(t);
                let mut truth = [JointAngles::zeros(); LEG_COUNT];
                let mut measured = [JointAngles::zeros(); LEG_COUNT];
                let mut contact_velocity = [None; LEG_COUNT];
                for leg in 0..LEG_COUNT {
                    let foot_body = body.rotation.transpose() * (traj.foot_position(leg, t) - body.position);
                    let alpha = config.legs[leg]
                        .inverse(&foot_body)
                        .map_err(|source| SimError::Unreachable { time: t, leg, source })?;
                    truth[leg] = alpha;
                    measured[leg] = alpha + normal_vec3(&mut rng, noise.encoder_std);
                    if traj.in_contact(leg, t) {
                        contact_velocity[leg] = Some(normal_vec3(&mut rng, noise.contact_vel_std));
                    }
                }
                joint_angles.push((t, truth));
                stream.push(SensorEvent::Encoder(EncoderSample {
                    timestamp: t,
                    angles: measured,
                    contact_velocity,
                }));
            }
            _ => {
                let body = traj.body_at(t);
                let (omega, specific_force) = interval_mean(&traj, t, 1.0 / config.imu_rate);
                let gyro = omega + bias.gyro + normal_vec3(&mut rng, noise.gyro_std);
                let accel = specific_force + bias.accel + normal_vec3(&mut rng, noise.accel_std);
                samples.push(TruthSample {
                    timestamp: t,
                    nav: traj.nav_at(t),
                    euler: body.euler,
                    omega,
                    specific_force,
                });
                stream.push(SensorEvent::Imu(ImuSample {
                    gyro,
                    accel,
                    timestamp: t,
                }));
            }
        }
    }
    debug_assert!(stream.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        a.timestamp() < b.timestamp() || (a.timestamp() == b.timestamp() && a.rank() <= b.rank())
    }));

    let truth = TruthRecord {
        trajectory: traj,
        bias,
        samples,
        joint_angles,
    };
    Ok((truth, stream))
}

/// Sampled initial estimate offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDraw {
    /// (roll, pitch, yaw) offsets, rad.
    pub euler: Vec3,
    pub rotation: Rot3,
    pub velocity: Vec3,
}

/// Per-axis uniform initial orientation and velocity errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialSampler {
    /// Half-width of each Euler angle range, rad.
    pub max_angle: f64,
    /// Half-width of each velocity range, m/s.
    pub max_speed: f64,
    /// Forces every draw to zero.
    pub zero: bool,
}

impl Default for InitialSampler {
    fn default() -> Self {
        Self {
            max_angle: 30.0_f64.to_radians(),
            max_speed: 1.0,
            zero: false,
        }
    }
}

impl InitialSampler {
    /// Deterministic draw for `seed`: roll, pitch, yaw, then vx, vy, vz.
    pub fn draw(&self, seed: u64) -> InitialDraw {
        if self.zero {
            return InitialDraw {
                euler: Vec3::zeros(),
                rotation: Rot3::identity(),
                velocity: Vec3::zeros(),
            };
        }
        let mut rng = NoiseRng::seed_from_u64(seed);
        let euler = Vec3::from_fn(|_, _| symmetric_uniform(&mut rng, self.max_angle));
        let velocity = Vec3::from_fn(|_, _| symmetric_uniform(&mut rng, self.max_speed));
        InitialDraw {
            euler,
            rotation: rotation_from_euler(euler.x, euler.y, euler.z),
            velocity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GaitConfig {
        GaitConfig {
            duration: 2.0,
            ..GaitConfig::default()
        }
    }

    #[test]
    fn stream_is_time_ordered_with_tie_rule() {
        let (_, stream) = generate(&quick()).unwrap();
        for w in stream.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(a.timestamp() <= b.timestamp());
            if a.timestamp() == b.timestamp() {
                assert!(a.rank() <= b.rank());
            }
        }
        assert!(matches!(stream[0], SensorEvent::Contact(_)));
        assert!(matches!(stream[1], SensorEvent::Contact(_)));
        assert!(matches!(stream[2], SensorEvent::Encoder(_)));
        assert!(matches!(stream[3], SensorEvent::Imu(_)));
    }

    #[test]
    fn sample_counts_follow_rates() {
        let cfg = quick();
        let (truth, stream) = generate(&cfg).unwrap();
        let imu = stream.iter().filter(|e| matches!(e, SensorEvent::Imu(_))).count();
        let enc = stream.iter().filter(|e| matches!(e, SensorEvent::Encoder(_))).count();
        assert_eq!(imu, 401);
        assert_eq!(enc, 1001);
        assert_eq!(truth.samples.len(), imu);
    }

    #[test]
    fn same_seed_same_stream() {
        let (_, a) = generate(&quick()).unwrap();
        let (_, b) = generate(&quick()).unwrap();
        assert_eq!(a, b);
        let (_, c) = generate(&GaitConfig { seed: 1, ..quick() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_encoders_reproduce_feet() {
        let cfg = GaitConfig {
            noise: NoiseParams::zero(),
            ..quick()
        };
        let (truth, stream) = generate(&cfg).unwrap();
        for ev in &stream {
            if let SensorEvent::Encoder(e) = ev {
                let b = truth.trajectory.body_at(e.timestamp);
                for leg in 0..LEG_COUNT {
                    let foot = b.position + b.rotation * cfg.legs[leg].fk_position(&e.angles[leg]);
                    let expect = truth.trajectory.foot_position(leg, e.timestamp);
                    assert!((foot - expect).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn contact_flags_alternate() {
        let (_, stream) = generate(&quick()).unwrap();
        let flags: Vec<ContactFlag> = stream
            .iter()
            .filter_map(|e| match e {
                SensorEvent::Contact(c) => Some(*c),
                _ => None,
            })
            .collect();
        assert!(flags[0].in_contact && flags[1].in_contact);
        let liftoffs: Vec<usize> = flags.iter().filter(|c| !c.in_contact).map(|c| c.leg).collect();
        assert!(liftoffs.len() >= 3);
        for (i, leg) in liftoffs.iter().enumerate() {
            assert_eq!(*leg, i % 2);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            GaitConfig { imu_rate: 0.0, ..quick() },
            GaitConfig { duration: -1.0, ..quick() },
            GaitConfig { double_support: 1.0, ..quick() },
        ] {
            assert!(matches!(generate(&cfg), Err(SimError::InvalidConfig(_))));
        }
    }

    #[test]
    fn unreachable_reports_time() {
        let cfg = GaitConfig {
            motion: BodyMotion {
                nominal_height: 1.5,
                ..BodyMotion::default()
            },
            ..quick()
        };
        match generate(&cfg) {
            Err(SimError::Unreachable { time, .. }) => assert_eq!(time, 0.0),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn initial_sampler_bounds_and_override() {
        let s = InitialSampler::default();
        assert_eq!(s.draw(3), s.draw(3));
        let d = s.draw(3);
        assert!(d.euler.amax() <= s.max_angle && d.velocity.amax() <= 1.0);
        let z = InitialSampler { zero: true, ..s }.draw(3);
        assert_eq!(z.rotation, Rot3::identity());
        assert_eq!(z.velocity, Vec3::zeros());
    }
}
