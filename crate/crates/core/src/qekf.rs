//! Quaternion error-state EKF over the same state as the invariant filter.
//!
//! The attitude error is a local (body-frame) rotation vector,
//! `R = R̂ Exp(δθ)`, and every other component is additive, `x = x̂ + δx`.
//! The error ordering `(δθ, δv, δp, δd_1..δd_N, δb_g, δb_a)` matches
//! [`crate::filter`], so covariances line up block by block. Unlike the
//! invariant filter, both the propagation Jacobian and the measurement
//! Jacobian depend on the current estimate.

use crate::filter::{
    spd_solve, strapdown_step, symmetrize, ContactId, FilterConfig, FilterError, ImuBias,
    ImuSample, InitialStd, KinematicMeasurement, Layout, NavState,
};
use crate::lie::{skew, so3_log, Rot3, Vec3};
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion};

#[derive(Debug, Clone, PartialEq)]
pub struct QekfState {
    /// World-from-body orientation.
    pub orientation: UnitQuaternion<f64>,
    pub velocity: Vec3,
    pub position: Vec3,
    pub contacts: IndexMap<ContactId, Vec3>,
    pub bias: ImuBias,
    pub cov: DMatrix<f64>,
    pub contact_frames: IndexMap<ContactId, Rot3>,
}

fn quaternion_from_rotation(r: &Rot3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

impl QekfState {
    pub fn new(nav: NavState, bias: ImuBias, cov: DMatrix<f64>) -> Self {
        let contact_frames = nav.contacts.keys().map(|&id| (id, Rot3::identity())).collect();
        Self {
            orientation: quaternion_from_rotation(&nav.rotation),
            velocity: nav.velocity,
            position: nav.position,
            contacts: nav.contacts,
            bias,
            cov,
            contact_frames,
        }
    }

    pub fn rotation(&self) -> Rot3 {
        self.orientation.to_rotation_matrix().into_inner()
    }

    pub fn nav(&self) -> NavState {
        let mut nav = NavState::new(self.rotation(), self.velocity, self.position);
        nav.contacts = self.contacts.clone();
        nav
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.contacts.len())
    }

    pub fn contact_index(&self, id: ContactId) -> Option<usize> {
        self.contacts.get_index_of(&id)
    }
}

/// Error of `estimate` relative to `truth` in this filter's convention:
/// `(Log(R̂ᵀR), v − v̂, p − p̂, d − d̂ .., b − b̂)`. Bias entries are included
/// only when `with_bias` is set. Contacts are matched by id in estimate order.
pub fn qekf_error(
    truth: &NavState,
    truth_bias: &ImuBias,
    estimate: &QekfState,
    with_bias: bool,
) -> Result<DVector<f64>, FilterError> {
    if truth.contacts.len() != estimate.contacts.len() {
        return Err(FilterError::ContactMismatch);
    }
    let layout = estimate.layout();
    let n = if with_bias { layout.dim() } else { layout.group_dim() };
    let mut e = DVector::zeros(n);
    let r_hat = estimate.rotation();
    e.fixed_rows_mut::<3>(Layout::ROT)
        .copy_from(&so3_log(&(r_hat.transpose() * truth.rotation)));
    e.fixed_rows_mut::<3>(Layout::VEL)
        .copy_from(&(truth.velocity - estimate.velocity));
    e.fixed_rows_mut::<3>(Layout::POS)
        .copy_from(&(truth.position - estimate.position));
    for (i, (id, d_hat)) in estimate.contacts.iter().enumerate() {
        let d = truth.contacts.get(id).ok_or(FilterError::ContactMismatch)?;
        e.fixed_rows_mut::<3>(layout.contact(i)).copy_from(&(d - d_hat));
    }
    if with_bias {
        e.fixed_rows_mut::<3>(layout.gyro_bias())
            .copy_from(&(truth_bias.gyro - estimate.bias.gyro));
        e.fixed_rows_mut::<3>(layout.accel_bias())
            .copy_from(&(truth_bias.accel - estimate.bias.accel));
    }
    Ok(e)
}

/// First-order map from this filter's error to the right-invariant error
/// `(ξ, ζ)` about the estimate: `ξ_R = −R̂ δθ`,
/// `ξ_x = −δx − skew(x̂) R̂ δθ` for each of v, p and the contacts, `ζ = −δb`.
pub fn to_right_invariant_error(state: &QekfState) -> DMatrix<f64> {
    let layout = state.layout();
    let n = layout.dim();
    let r = state.rotation();
    let mut t = -DMatrix::identity(n, n);
    t.fixed_view_mut::<3, 3>(Layout::ROT, Layout::ROT).copy_from(&-r);
    let mut couple = |row: usize, x: &Vec3| {
        t.fixed_view_mut::<3, 3>(row, Layout::ROT)
            .copy_from(&(-skew(x) * r));
    };
    couple(Layout::VEL, &state.velocity);
    couple(Layout::POS, &state.position);
    for (i, d) in state.contacts.values().enumerate() {
        couple(layout.contact(i), d);
    }
    t
}

/// The quaternion error-state EKF.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuaternionEkf {
    pub config: FilterConfig,
}

impl QuaternionEkf {
    pub fn new(config: FilterConfig) -> Self {
        Self { config }
    }

    pub fn initial_state(&self, nav: NavState, bias: ImuBias, std: &InitialStd) -> QekfState {
        let cov = std.covariance(nav.contacts.len(), self.config.estimate_bias);
        QekfState::new(nav, bias, cov)
    }

    /// Error-dynamics matrix linearized about the estimate and the
    /// bias-corrected inputs.
    pub fn build_f(&self, state: &QekfState, omega: &Vec3, accel: &Vec3) -> DMatrix<f64> {
        let layout = state.layout();
        let n = layout.dim();
        let r = state.rotation();
        let mut f = DMatrix::zeros(n, n);
        f.fixed_view_mut::<3, 3>(Layout::ROT, Layout::ROT)
            .copy_from(&-skew(omega));
        f.fixed_view_mut::<3, 3>(Layout::VEL, Layout::ROT)
            .copy_from(&(-r * skew(accel)));
        f.fixed_view_mut::<3, 3>(Layout::POS, Layout::VEL)
            .copy_from(&Matrix3::identity());
        if self.config.estimate_bias {
            f.fixed_view_mut::<3, 3>(Layout::ROT, layout.gyro_bias())
                .copy_from(&-Matrix3::identity());
            f.fixed_view_mut::<3, 3>(Layout::VEL, layout.accel_bias())
                .copy_from(&-r);
        }
        f
    }

    pub fn noise_covariance(&self, state: &QekfState) -> DMatrix<f64> {
        let layout = state.layout();
        let noise = &self.config.noise;
        let r = state.rotation();
        let iso = |s: f64| Matrix3::identity() * (s * s);
        let mut q = DMatrix::zeros(layout.dim(), layout.dim());
        q.fixed_view_mut::<3, 3>(Layout::ROT, Layout::ROT)
            .copy_from(&iso(noise.gyro_std));
        q.fixed_view_mut::<3, 3>(Layout::VEL, Layout::VEL)
            .copy_from(&(r * iso(noise.accel_std) * r.transpose()));
        for (i, id) in state.contacts.keys().enumerate() {
            let frame = r * state
                .contact_frames
                .get(id)
                .copied()
                .unwrap_or_else(Rot3::identity);
            let c = layout.contact(i);
            q.fixed_view_mut::<3, 3>(c, c)
                .copy_from(&(frame * iso(noise.contact_vel_std) * frame.transpose()));
        }
        if self.config.estimate_bias {
            let (bg, ba) = (layout.gyro_bias(), layout.accel_bias());
            q.fixed_view_mut::<3, 3>(bg, bg)
                .copy_from(&iso(noise.gyro_bias_std));
            q.fixed_view_mut::<3, 3>(ba, ba)
                .copy_from(&iso(noise.accel_bias_std));
        }
        q
    }

    pub fn propagate(&self, state: &QekfState, imu: &ImuSample, dt: f64) -> Result<QekfState, FilterError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(FilterError::BadTimeStep(dt));
        }
        if !imu.gyro.iter().chain(imu.accel.iter()).all(|x| x.is_finite()) {
            return Err(FilterError::NonFinite("imu sample"));
        }
        let omega = imu.gyro - state.bias.gyro;
        let accel = imu.accel - state.bias.accel;

        let f = self.build_f(state, &omega, &accel);
        let phi = (&f * dt).exp();
        let q_disc = &phi * self.noise_covariance(state) * phi.transpose() * dt;
        let cov = symmetrize(&(&phi * &state.cov * phi.transpose() + q_disc));

        let (_, v, p) = strapdown_step(
            &state.rotation(),
            &state.velocity,
            &state.position,
            &omega,
            &accel,
            dt,
            &self.config.gravity,
        );
        let mut next = state.clone();
        let mut q = state.orientation * UnitQuaternion::from_scaled_axis(omega * dt);
        q.renormalize();
        next.orientation = q;
        next.velocity = v;
        next.position = p;
        next.cov = cov;
        Ok(next)
    }

    pub fn update_kinematics(
        &self,
        state: &QekfState,
        measurements: &[KinematicMeasurement],
    ) -> Result<QekfState, FilterError> {
        if measurements.is_empty() {
            return Ok(state.clone());
        }
        let layout = state.layout();
        let n = layout.dim();
        let m = 3 * measurements.len();
        let r = state.rotation();
        let rt = r.transpose();

        let mut h = DMatrix::zeros(m, n);
        let mut noise = DMatrix::zeros(m, m);
        let mut residual = DVector::zeros(m);
        for (j, meas) in measurements.iter().enumerate() {
            let idx = state
                .contact_index(meas.contact_id)
                .ok_or(FilterError::UnknownContact(meas.contact_id))?;
            let row = 3 * j;
            let predicted = rt * (state.contacts[idx] - state.position);
            h.fixed_view_mut::<3, 3>(row, Layout::ROT)
                .copy_from(&skew(&predicted));
            h.fixed_view_mut::<3, 3>(row, Layout::POS).copy_from(&-rt);
            h.fixed_view_mut::<3, 3>(row, layout.contact(idx))
                .copy_from(&rt);
            noise
                .fixed_view_mut::<3, 3>(row, row)
                .copy_from(&body_noise(meas)?);
            residual
                .fixed_rows_mut::<3>(row)
                .copy_from(&(meas.fk_position - predicted));
        }
        if !residual.iter().all(|x| x.is_finite()) {
            return Err(FilterError::NonFinite("measurement"));
        }

        let ph_t = &state.cov * h.transpose();
        let s = symmetrize(&(&h * &ph_t + noise));
        let gain = spd_solve(&s, &ph_t.transpose())?.transpose();
        let delta = &gain * residual;

        let mut next = state.clone();
        let dtheta: Vec3 = delta.fixed_rows::<3>(Layout::ROT).into_owned();
        let mut q = state.orientation * UnitQuaternion::from_scaled_axis(dtheta);
        q.renormalize();
        next.orientation = q;
        next.velocity += delta.fixed_rows::<3>(Layout::VEL);
        next.position += delta.fixed_rows::<3>(Layout::POS);
        for (i, d) in next.contacts.values_mut().enumerate() {
            *d += delta.fixed_rows::<3>(layout.contact(i));
        }
        if self.config.estimate_bias {
            next.bias.gyro += delta.fixed_rows::<3>(layout.gyro_bias());
            next.bias.accel += delta.fixed_rows::<3>(layout.accel_bias());
        }
        let ikh = DMatrix::identity(n, n) - &gain * &h;
        next.cov = symmetrize(&(ikh * &state.cov));
        for meas in measurements {
            next.contact_frames.insert(meas.contact_id, meas.fk_rotation);
        }
        Ok(next)
    }

    /// Augments with `d̂ = p̂ + R̂ fk_p`; to first order
    /// `δd = δp − R̂ skew(fk_p) δθ + R̂ J w`.
    pub fn add_contact(&self, state: &QekfState, meas: &KinematicMeasurement) -> Result<QekfState, FilterError> {
        let id = meas.contact_id;
        if state.contacts.contains_key(&id) {
            return Err(FilterError::DuplicateContact(id));
        }
        let r = state.rotation();
        let d = state.position + r * meas.fk_position;
        if !d.iter().all(|x| x.is_finite()) {
            return Err(FilterError::NonFinite("measurement"));
        }
        let old = state.layout();
        let n = old.dim();
        let at = old.group_dim();

        let mut fa = DMatrix::zeros(n + 3, n);
        for i in 0..n {
            let row = if i < at { i } else { i + 3 };
            fa[(row, i)] = 1.0;
        }
        fa.fixed_view_mut::<3, 3>(at, Layout::POS)
            .copy_from(&Matrix3::identity());
        fa.fixed_view_mut::<3, 3>(at, Layout::ROT)
            .copy_from(&(-r * skew(&meas.fk_position)));
        let noise = r * body_noise(meas)? * r.transpose();

        let mut cov = &fa * &state.cov * fa.transpose();
        let mut block = cov.fixed_view_mut::<3, 3>(at, at);
        block += noise;

        let mut next = state.clone();
        next.contacts.insert(id, d);
        next.contact_frames.insert(id, meas.fk_rotation);
        next.cov = symmetrize(&cov);
        Ok(next)
    }

    pub fn remove_contact(&self, state: &QekfState, id: ContactId) -> Result<QekfState, FilterError> {
        let idx = state
            .contact_index(id)
            .ok_or(FilterError::UnknownContact(id))?;
        let start = state.layout().contact(idx);
        let mut next = state.clone();
        next.cov = state.cov.clone().remove_rows(start, 3).remove_columns(start, 3);
        next.contacts.shift_remove(&id);
        next.contact_frames.shift_remove(&id);
        Ok(next)
    }
}

fn body_noise(meas: &KinematicMeasurement) -> Result<Matrix3<f64>, FilterError> {
    let m = meas.encoder_cov.nrows();
    if meas.jacobian.nrows() != 3 || meas.jacobian.ncols() != m || meas.encoder_cov.ncols() != m {
        return Err(FilterError::MeasurementShape);
    }
    let n = &meas.jacobian * &meas.encoder_cov * meas.jacobian.transpose();
    Ok(n.fixed_view::<3, 3>(0, 0).into_owned())
}
