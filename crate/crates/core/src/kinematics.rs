//! A 3-DOF revolute point-foot leg: hip roll, hip pitch, knee pitch.
//!
//! With joint rotations `R_i = exp(α_i a_i)` the foot sits at
//!
//! ```text
//! fk_p(α) = h + R_1 R_2 ((0, 0, −L1) + R_3 (0, 0, −L2))
//! ```
//!
//! in the body (IMU) frame, and the contact frame orientation is
//! `R_1 R_2 R_3`. With the default axes `(x, y, y)` a positive knee angle
//! swings the shank towards −x.

use crate::filter::{ContactId, KinematicMeasurement};
use crate::lie::{so3_exp, Rot3, Vec3};
use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type JointAngles = Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("invalid leg model: {0}")]
    InvalidModel(&'static str),
    #[error("foot target {0:?} is out of reach")]
    Unreachable([f64; 3]),
    #[error("closed-form inverse kinematics needs axes (x, y, y)")]
    UnsupportedAxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegModel {
    /// Body origin to hip, body frame, m.
    pub hip_offset: Vec3,
    pub thigh: f64,
    pub shank: f64,
    /// Hip roll, hip pitch and knee axes, each expressed in its parent link.
    pub axes: [Vec3; 3],
}

impl LegModel {
    /// Default leg on the side given by `lateral_sign` (+1 left, −1 right).
    pub fn default_side(lateral_sign: f64) -> Self {
        Self {
            hip_offset: Vec3::new(0.0, 0.1 * lateral_sign, -0.2),
            thigh: 0.4,
            shank: 0.4,
            axes: [Vec3::x(), Vec3::y(), Vec3::y()],
        }
    }

    pub fn left() -> Self {
        Self::default_side(1.0)
    }

    pub fn right() -> Self {
        Self::default_side(-1.0)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.thigh > 0.0 && self.shank > 0.0) {
            return Err(KinematicsError::InvalidModel("link lengths must be positive"));
        }
        if !self.hip_offset.iter().all(|x| x.is_finite()) {
            return Err(KinematicsError::InvalidModel("hip offset must be finite"));
        }
        if self.axes.iter().any(|a| (a.norm() - 1.0).abs() > 1e-9) {
            return Err(KinematicsError::InvalidModel("joint axes must be unit vectors"));
        }
        Ok(())
    }

    fn joint_rotations(&self, alpha: &JointAngles) -> [Rot3; 3] {
        [
            so3_exp(&(self.axes[0] * alpha[0])),
            so3_exp(&(self.axes[1] * alpha[1])),
            so3_exp(&(self.axes[2] * alpha[2])),
        ]
    }

    /// Knee and foot positions in the body frame.
    fn chain(&self, alpha: &JointAngles) -> (Vec3, Vec3) {
        let [r1, r2, r3] = self.joint_rotations(alpha);
        let r12 = r1 * r2;
        let knee = self.hip_offset + r12 * Vec3::new(0.0, 0.0, -self.thigh);
        let foot = knee + r12 * r3 * Vec3::new(0.0, 0.0, -self.shank);
        (knee, foot)
    }

    pub fn fk_position(&self, alpha: &JointAngles) -> Vec3 {
        self.chain(alpha).1
    }

    pub fn fk_rotation(&self, alpha: &JointAngles) -> Rot3 {
        let [r1, r2, r3] = self.joint_rotations(alpha);
        r1 * r2 * r3
    }

    /// Geometric linear-velocity Jacobian: column i is `w_i × (foot − o_i)`
    /// with `w_i` the world-frame axis and `o_i` a point on it.
    pub fn jacobian(&self, alpha: &JointAngles) -> Matrix3<f64> {
        let [r1, r2, _] = self.joint_rotations(alpha);
        let (knee, foot) = self.chain(alpha);
        let w1 = self.axes[0];
        let w2 = r1 * self.axes[1];
        let w3 = r1 * r2 * self.axes[2];
        Matrix3::from_columns(&[
            w1.cross(&(foot - self.hip_offset)),
            w2.cross(&(foot - self.hip_offset)),
            w3.cross(&(foot - knee)),
        ])
    }

    /// Closed-form inverse kinematics for the `(x, y, y)` axis layout,
    /// returning the knee-forward solution (knee angle ≥ 0).
    pub fn inverse(&self, foot: &Vec3) -> Result<JointAngles, KinematicsError> {
        if self.axes != [Vec3::x(), Vec3::y(), Vec3::y()] {
            return Err(KinematicsError::UnsupportedAxes);
        }
        let unreachable = || KinematicsError::Unreachable([foot.x, foot.y, foot.z]);
        let r = foot - self.hip_offset;
        let rho = r.y.hypot(r.z);
        if rho < 1e-9 || !rho.is_finite() {
            return Err(unreachable());
        }
        // Hip roll brings the foot into the sagittal plane of the leg.
        let a1 = r.y.atan2(-r.z);
        let q = Vec3::new(r.x, 0.0, -rho);

        let (l1, l2) = (self.thigh, self.shank);
        let cos_knee = (q.norm_squared() - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&cos_knee) {
            return Err(unreachable());
        }
        let a3 = cos_knee.acos();
        let w = Vec3::new(-l2 * a3.sin(), 0.0, -l1 - l2 * a3.cos());
        let a2 = q.x.atan2(q.z) - w.x.atan2(w.z);
        Ok(JointAngles::new(a1, crate::lie::wrap_angle(a2), a3))
    }

    /// Builds a filter measurement from measured joint angles with isotropic
    /// encoder noise `encoder_std` (rad).
    pub fn measurement(&self, id: ContactId, alpha: &JointAngles, encoder_std: f64) -> KinematicMeasurement {
        let j = self.jacobian(alpha);
        KinematicMeasurement {
            contact_id: id,
            fk_position: self.fk_position(alpha),
            fk_rotation: self.fk_rotation(alpha),
            jacobian: DMatrix::from_column_slice(3, 3, j.as_slice()),
            encoder_cov: DMatrix::identity(3, 3) * (encoder_std * encoder_std),
        }
    }
}

impl Default for LegModel {
    fn default() -> Self {
        Self::left()
    }
}

/// Numerical rank of the Jacobian; below 3 the leg is at a singularity.
pub fn jacobian_rank(j: &Matrix3<f64>, tol: f64) -> usize {
    let sv = j.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > tol * max.max(f64::MIN_POSITIVE)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::rotation_defect;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_alpha(rng: &mut ChaCha20Rng) -> JointAngles {
        JointAngles::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn zero_configuration_points_straight_down() {
        let leg = LegModel::left();
        assert_abs_diff_eq!(
            leg.fk_position(&JointAngles::zeros()),
            Vec3::new(0.0, 0.1, -1.0),
            epsilon = 1e-15
        );
        assert_eq!(leg.fk_rotation(&JointAngles::zeros()), Rot3::identity());
    }

    #[test]
    fn right_angle_knee_planar_geometry() {
        let leg = LegModel::right();
        let foot = leg.fk_position(&JointAngles::new(0.0, 0.0, FRAC_PI_2));
        let expected = leg.hip_offset + Vec3::new(-leg.shank, 0.0, -leg.thigh);
        assert_abs_diff_eq!(foot, expected, epsilon = 1e-15);
    }

    #[test]
    fn periodic_in_each_joint() {
        let leg = LegModel::left();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = random_alpha(&mut rng);
        for i in 0..3 {
            let mut b = a;
            b[i] += 2.0 * PI;
            assert_abs_diff_eq!(leg.fk_position(&a), leg.fk_position(&b), epsilon = 1e-14);
            assert_abs_diff_eq!(leg.fk_rotation(&a), leg.fk_rotation(&b), epsilon = 1e-14);
        }
    }

    #[test]
    fn rotation_single_axis_and_orthogonality() {
        let leg = LegModel::left();
        for (i, axis) in leg.axes.iter().enumerate() {
            let mut a = JointAngles::zeros();
            a[i] = 0.7;
            assert_abs_diff_eq!(leg.fk_rotation(&a), so3_exp(&(axis * 0.7)), epsilon = 1e-15);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert!(rotation_defect(&leg.fk_rotation(&random_alpha(&mut rng))) < 1e-14);
        }
    }

    /// The shank direction in the position chain is the contact frame's −z.
    #[test]
    fn rotation_matches_position_chain() {
        let leg = LegModel::left();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_alpha(&mut rng);
            let (knee, foot) = leg.chain(&a);
            let shank_dir = (foot - knee) / leg.shank;
            assert_abs_diff_eq!(shank_dir, leg.fk_rotation(&a) * -Vec3::z(), epsilon = 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let leg = LegModel::left();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let h = 1e-6;
        for _ in 0..100 {
            let a = random_alpha(&mut rng);
            let j = leg.jacobian(&a);
            for c in 0..3 {
                let mut ap = a;
                let mut am = a;
                ap[c] += h;
                am[c] -= h;
                let fd = (leg.fk_position(&ap) - leg.fk_position(&am)) / (2.0 * h);
                assert!((fd - j.column(c)).amax() < 1e-6);
            }
        }
    }

    #[test]
    fn hip_roll_column_at_zero() {
        let leg = LegModel::left();
        let a = JointAngles::zeros();
        let col = leg.axes[0].cross(&(leg.fk_position(&a) - leg.hip_offset));
        assert_eq!(leg.jacobian(&a).column(0).into_owned(), col);
    }

    #[test]
    fn straight_knee_is_singular() {
        let leg = LegModel::left();
        assert_eq!(jacobian_rank(&leg.jacobian(&JointAngles::new(0.2, -0.3, 0.0)), 1e-9), 2);
        assert_eq!(jacobian_rank(&leg.jacobian(&JointAngles::new(0.2, -0.3, 0.5)), 1e-9), 3);
    }

    #[test]
    fn inverse_round_trip() {
        let leg = LegModel::right();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = JointAngles::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.6..0.6),
                rng.random_range(0.05..1.5),
            );
            let foot = leg.fk_position(&a);
            let b = leg.inverse(&foot).unwrap();
            assert_abs_diff_eq!(leg.fk_position(&b), foot, epsilon = 1e-10);
            assert_abs_diff_eq!(b, a, epsilon = 1e-8);
        }
    }

    #[test]
    fn inverse_errors() {
        let leg = LegModel::left();
        assert!(matches!(
            leg.inverse(&Vec3::new(0.0, 0.1, -1.5)),
            Err(KinematicsError::Unreachable(_))
        ));
        let mut odd = leg;
        odd.axes[0] = Vec3::z();
        assert_eq!(odd.inverse(&Vec3::new(0.0, 0.1, -0.8)), Err(KinematicsError::UnsupportedAxes));
        let mut bad = leg;
        bad.thigh = 0.0;
        assert!(bad.validate().is_err());
        assert!(leg.validate().is_ok());
    }

    #[test]
    fn measurement_noise_shape() {
        let leg = LegModel::left();
        let a = JointAngles::new(0.1, -0.4, 0.8);
        let m = leg.measurement(1, &a, 0.01);
        assert_eq!(m.contact_id, 1);
        assert_eq!(m.jacobian.shape(), (3, 3));
        assert_abs_diff_eq!(m.encoder_cov[(2, 2)], 1e-4);
        assert_eq!(m.fk_position, leg.fk_position(&a));
    }
}
