//! Analytic body trajectory and foot schedule of the simulated biped.
//!
//! Every scalar channel of the body pose is a closed-form function of time
//! evaluated on second-order jets, so velocity, acceleration and Euler rates
//! come out exactly rather than by numerical differentiation.

use super::{BodyMotion, GaitConfig, LEG_COUNT};
use crate::filter::NavState;
use crate::lie::{rotation_from_euler, Rot3, Vec3};
use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

/// Value with its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet::constant(0.0);

    pub const fn constant(v: f64) -> Self {
        Self { v, d: 0.0, dd: 0.0 }
    }

    pub const fn time(t: f64) -> Self {
        Self { v: t, d: 1.0, dd: 0.0 }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        Self {
            v: s,
            d: c * self.d,
            dd: -s * self.d * self.d + c * self.dd,
        }
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        Self {
            v: c,
            d: -s * self.d,
            dd: -c * self.d * self.d - s * self.dd,
        }
    }

    /// `Σ c_i x^i` by Horner's rule, coefficients in increasing degree.
    pub fn poly(self, coeffs: &[f64]) -> Self {
        coeffs
            .iter()
            .rev()
            .fold(Jet::ZERO, |acc, &c| acc * self + Jet::constant(c))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d + o.d,
            dd: self.dd + o.dd,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d - o.d,
            dd: self.dd - o.dd,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        Jet {
            v: self.v * k,
            d: self.d * k,
            dd: self.dd * k,
        }
    }
}

/// `u ↦ 6u⁵ − 15u⁴ + 10u³` on `(start, start + duration)`, clamped to 0 and
/// 1 outside. Continuous up to the second derivative.
fn smootherstep(t: Jet, start: f64, duration: f64) -> Jet {
    if duration <= 0.0 {
        return Jet::constant(if t.v >= start { 1.0 } else { 0.0 });
    }
    let u = (t - Jet::constant(start)) * (1.0 / duration);
    if u.v <= 0.0 {
        Jet::ZERO
    } else if u.v >= 1.0 {
        Jet::constant(1.0)
    } else {
        u.poly(&[0.0, 0.0, 0.0, 10.0, -15.0, 6.0])
    }
}

/// Antiderivative of [`smootherstep`] in its own unit, `∫₀ᵘ s`, continued
/// linearly past `u = 1`.
fn smootherstep_integral(t: Jet, start: f64, duration: f64) -> Jet {
    let u = (t - Jet::constant(start)) * (1.0 / duration);
    if u.v <= 0.0 {
        Jet::ZERO
    } else if u.v >= 1.0 {
        u - Jet::constant(0.5)
    } else {
        u.poly(&[0.0, 0.0, 0.0, 0.0, 2.5, -3.0, 1.0])
    }
}

fn sine(t: Jet, amplitude: f64, period: f64, phase_start: f64) -> Jet {
    if amplitude == 0.0 || period <= 0.0 {
        return Jet::ZERO;
    }
    ((t - Jet::constant(phase_start)) * (TAU / period)).sin() * amplitude
}

/// Exact body state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub rotation: Rot3,
    /// (roll, pitch, yaw), rad, with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub euler: Vec3,
    /// Body-frame angular velocity.
    pub omega: Vec3,
    /// Body-frame specific force `Rᵀ(a − g)`.
    pub specific_force: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stance {
    start: f64,
    end: f64,
    position: Vec3,
}

/// A contact transition of one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactTransition {
    pub time: f64,
    pub leg: usize,
    pub in_contact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    motion: BodyMotion,
    walking: bool,
    v_start: f64,
    v_end: f64,
    ramp_time: f64,
    walk_start: f64,
    step_duration: f64,
    step_height: f64,
    gravity: Vec3,
    stances: [Vec<Stance>; LEG_COUNT],
    transitions: Vec<ContactTransition>,
}

impl Trajectory {
    pub fn new(config: &GaitConfig) -> Self {
        let mut traj = Self {
            motion: config.motion,
            walking: config.walking,
            v_start: config.v_start,
            v_end: config.v_end,
            ramp_time: config.ramp_time,
            walk_start: config.walk_start,
            step_duration: config.step_duration,
            step_height: config.step_height,
            gravity: config.gravity,
            stances: Default::default(),
            transitions: Vec::new(),
        };
        traj.plan_steps(config);
        traj
    }

    /// Lays out alternating footholds, left leg first. Each step of length T
    /// begins with a double-support phase of βT followed by the swing of one
    /// leg; each foot lands under its hip at the body position of the
    /// midpoint of its coming stance.
    fn plan_steps(&mut self, config: &GaitConfig) {
        let x0 = self.pose_jets(Jet::time(0.0)).0;
        for (leg, model) in config.legs.iter().enumerate() {
            self.stances[leg].push(Stance {
                start: f64::NEG_INFINITY,
                end: f64::INFINITY,
                position: Vec3::new(x0[0].v, x0[1].v + model.hip_offset.y, 0.0),
            });
        }
        if !config.walking {
            return;
        }
        let t_step = config.step_duration;
        let stance_len = t_step * (1.0 + config.double_support);
        let mut k = 0usize;
        loop {
            let t0 = config.walk_start + k as f64 * t_step;
            let liftoff = t0 + config.double_support * t_step;
            if liftoff > config.duration {
                break;
            }
            let touchdown = t0 + t_step;
            let leg = k % LEG_COUNT;
            let mid = self.pose_jets(Jet::time(touchdown + 0.5 * stance_len)).0;
            let lateral = config.legs[leg].hip_offset.y;
            let stances = &mut self.stances[leg];
            stances.last_mut().expect("initial stance").end = liftoff;
            stances.push(Stance {
                start: touchdown,
                end: f64::INFINITY,
                position: Vec3::new(mid[0].v, mid[1].v + lateral, 0.0),
            });
            self.transitions.push(ContactTransition {
                time: liftoff,
                leg,
                in_contact: false,
            });
            if touchdown <= config.duration {
                self.transitions.push(ContactTransition {
                    time: touchdown,
                    leg,
                    in_contact: true,
                });
            }
            k += 1;
        }
    }

    /// Position and (roll, pitch, yaw) jets at time `t`.
    fn pose_jets(&self, t: Jet) -> ([Jet; 3], [Jet; 3]) {
        let m = &self.motion;
        let env = if self.walking {
            smootherstep(t, self.walk_start, m.gait_envelope_time)
        } else {
            Jet::ZERO
        };
        let ts = self.walk_start;
        // Lateral and roll cycles span two steps; vertical and pitch one.
        let two_step = 2.0 * self.step_duration;
        let one_step = self.step_duration;

        let x = if self.walking {
            t * self.v_start
                + smootherstep_integral(t, self.walk_start, self.ramp_time)
                    * ((self.v_end - self.v_start) * self.ramp_time)
        } else {
            Jet::ZERO
        };
        let y = env * sine(t, -m.sway, two_step, ts);
        let settle = Jet::constant(1.0) - smootherstep(t, 0.0, m.drop_time);
        let z = Jet::constant(m.nominal_height) + settle * m.drop_height + env * sine(t, m.bob, one_step, ts);

        let roll = env * sine(t, m.gait_roll, two_step, ts) + sine(t, m.lean_roll.amplitude, m.lean_roll.period, 0.0);
        let pitch =
            env * sine(t, m.gait_pitch, one_step, ts) + sine(t, m.lean_pitch.amplitude, m.lean_pitch.period, 0.0);
        let yaw = env * sine(t, m.gait_yaw, two_step, ts) + sine(t, m.heading.amplitude, m.heading.period, 0.0);
        ([x, y, z], [roll, pitch, yaw])
    }

    pub fn body_at(&self, t: f64) -> BodyState {
        let (p, e) = self.pose_jets(Jet::time(t));
        let [roll, pitch, yaw] = e;
        let rotation = rotation_from_euler(roll.v, pitch.v, yaw.v);
        let (sr, cr) = roll.v.sin_cos();
        let (sp, cp) = pitch.v.sin_cos();
        let omega = Vec3::new(
            roll.d - yaw.d * sp,
            pitch.d * cr + yaw.d * cp * sr,
            -pitch.d * sr + yaw.d * cp * cr,
        );
        let acceleration = Vec3::new(p[0].dd, p[1].dd, p[2].dd);
        BodyState {
            position: Vec3::new(p[0].v, p[1].v, p[2].v),
            velocity: Vec3::new(p[0].d, p[1].d, p[2].d),
            acceleration,
            rotation,
            euler: Vec3::new(roll.v, pitch.v, yaw.v),
            omega,
            specific_force: rotation.transpose() * (acceleration - self.gravity),
        }
    }

    fn stance_index(&self, leg: usize, t: f64) -> Result<usize, usize> {
        let stances = &self.stances[leg];
        // Index of the last stance starting at or before t.
        let i = stances.partition_point(|s| s.start <= t) - 1;
        if t < stances[i].end {
            Ok(i)
        } else {
            Err(i)
        }
    }

    pub fn in_contact(&self, leg: usize, t: f64) -> bool {
        self.stance_index(leg, t).is_ok()
    }

    /// World position of a foot. In stance it is pinned; in swing it follows
    /// a cycloid between footholds with the configured apex height.
    pub fn foot_position(&self, leg: usize, t: f64) -> Vec3 {
        match self.stance_index(leg, t) {
            Ok(i) => self.stances[leg][i].position,
            Err(i) => {
                let from = &self.stances[leg][i];
                let to = &self.stances[leg][i + 1];
                let tau = ((t - from.end) / (to.start - from.end)).clamp(0.0, 1.0);
                let s = tau - (TAU * tau).sin() / TAU;
                let mut pos = from.position + (to.position - from.position) * s;
                pos.z += self.step_height * 0.5 * (1.0 - (TAU * tau).cos());
                pos
            }
        }
    }

    /// Transitions in time order (liftoffs and touchdowns), excluding the
    /// initial all-stance configuration.
    pub fn transitions(&self) -> &[ContactTransition] {
        &self.transitions
    }

    /// True navigation state with the feet currently in contact, keyed by
    /// leg index.
    pub fn nav_at(&self, t: f64) -> NavState {
        let b = self.body_at(t);
        NavState::new(b.rotation, b.velocity, b.position).with_contacts(
            (0..LEG_COUNT)
                .filter(|&leg| self.in_contact(leg, t))
                .map(|leg| (leg, self.foot_position(leg, t))),
        )
    }

    /// Step-cycle phase in `[0, 1)` of the swing leg, or `None` outside walking.
    pub fn step_phase(&self, t: f64) -> Option<f64> {
        if !self.walking || t < self.walk_start {
            return None;
        }
        Some(((t - self.walk_start) / self.step_duration).fract())
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new(&GaitConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{skew, GroupElement};
    use approx::assert_abs_diff_eq;

    fn jet_fd(f: impl Fn(Jet) -> Jet, t: f64) {
        let h = 1e-5;
        let j = f(Jet::time(t));
        let d = (f(Jet::constant(t + h)).v - f(Jet::constant(t - h)).v) / (2.0 * h);
        let dd = (f(Jet::constant(t + h)).v - 2.0 * j.v + f(Jet::constant(t - h)).v) / (h * h);
        assert!((j.d - d).abs() < 1e-7, "{} vs {}", j.d, d);
        assert!((j.dd - dd).abs() < 1e-3, "{} vs {}", j.dd, dd);
    }

    #[test]
    fn jet_derivatives() {
        jet_fd(|t| (t * 2.0).sin() * t.cos(), 0.3);
        jet_fd(|t| t.poly(&[1.0, -2.0, 0.5, 3.0]), 0.7);
        jet_fd(|t| smootherstep(t, 0.1, 0.5), 0.3);
        jet_fd(|t| smootherstep_integral(t, 0.1, 0.5), 0.3);
        jet_fd(|t| smootherstep_integral(t, 0.1, 0.5), 0.9);
    }

    #[test]
    fn smootherstep_is_c2_at_ends() {
        for t in [0.1, 0.6] {
            let a = smootherstep(Jet::time(t - 1e-9), 0.1, 0.5);
            let b = smootherstep(Jet::time(t + 1e-9), 0.1, 0.5);
            assert!((a.v - b.v).abs() < 1e-8);
            assert!((a.d - b.d).abs() < 1e-6);
            assert!((a.dd - b.dd).abs() < 1e-6);
        }
        let s = smootherstep_integral(Jet::time(0.6), 0.1, 0.5);
        assert_abs_diff_eq!(s.v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn speed_ramp_reaches_target() {
        let cfg = GaitConfig::default();
        let traj = Trajectory::new(&cfg);
        let b = traj.body_at(cfg.walk_start + cfg.ramp_time + 0.1);
        assert_abs_diff_eq!(b.velocity.x, cfg.v_end, epsilon = 1e-12);
        assert_abs_diff_eq!(traj.body_at(0.0).velocity.x, cfg.v_start, epsilon = 1e-12);
    }

    #[test]
    fn omega_matches_rotation_derivative() {
        let traj = Trajectory::default();
        let h = 1e-6;
        for t in [0.05, 0.7, 1.9, 4.3, 8.0] {
            let b = traj.body_at(t);
            let rp = traj.body_at(t + h).rotation;
            let rm = traj.body_at(t - h).rotation;
            let rdot = (rp - rm) / (2.0 * h);
            assert!((b.rotation.transpose() * rdot - skew(&b.omega)).amax() < 1e-7);
        }
    }

    #[test]
    fn velocity_matches_position_derivative() {
        let traj = Trajectory::default();
        let h = 1e-6;
        for t in [0.1, 0.3, 1.0, 2.5, 9.0] {
            let fd = (traj.body_at(t + h).position - traj.body_at(t - h).position) / (2.0 * h);
            assert!((fd - traj.body_at(t).velocity).amax() < 1e-6);
        }
    }

    #[test]
    fn feet_alternate_and_stay_pinned() {
        let cfg = GaitConfig::default();
        let traj = Trajectory::new(&cfg);
        let tr = traj.transitions();
        assert!(!tr.is_empty());
        let liftoffs: Vec<usize> = tr.iter().filter(|c| !c.in_contact).map(|c| c.leg).collect();
        for (i, leg) in liftoffs.iter().enumerate() {
            assert_eq!(*leg, i % 2);
        }
        // At least one foot is always on the ground.
        let mut t = 0.0;
        while t < cfg.duration {
            assert!(traj.in_contact(0, t) || traj.in_contact(1, t));
            t += 0.001;
        }
        // Pinned feet do not move at all during stance.
        for leg in 0..2 {
            for s in &traj.stances[leg] {
                let (a, b) = (s.start.max(0.0), s.end.min(cfg.duration));
                if b <= a {
                    continue;
                }
                let p0 = traj.foot_position(leg, a);
                for k in 1..50 {
                    let t = a + (b - a) * k as f64 / 50.0;
                    assert!((traj.foot_position(leg, t) - p0).amax() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn swing_foot_is_continuous_at_transitions() {
        let traj = Trajectory::default();
        for c in traj.transitions() {
            let before = traj.foot_position(c.leg, c.time - 1e-9);
            let after = traj.foot_position(c.leg, c.time + 1e-9);
            assert!((before - after).norm() < 1e-6);
        }
    }

    #[test]
    fn stationary_statics() {
        let traj = Trajectory::new(&GaitConfig::stationary());
        for t in [0.0, 1.0, 5.0] {
            let b = traj.body_at(t);
            assert_eq!(b.omega, Vec3::zeros());
            assert_abs_diff_eq!(
                b.specific_force,
                -(b.rotation.transpose() * GaitConfig::default().gravity),
                epsilon = 1e-15
            );
        }
        assert!(traj.transitions().is_empty());
    }

    #[test]
    fn nav_state_lists_stance_feet() {
        let traj = Trajectory::default();
        let nav = traj.nav_at(0.0);
        assert_eq!(nav.contacts.len(), 2);
        let g: GroupElement = nav.to_group();
        assert_eq!(g.num_columns(), 4);
    }
}
