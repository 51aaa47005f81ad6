//! Contact-aided right-invariant EKF.
//!
//! The navigation state (orientation, velocity, position and the world
//! positions of the current contact points) lives on SE_{N+2}(3); IMU biases
//! are carried alongside as a plain vector parameter. The covariance is over
//! the augmented error `(ξ, ζ)` where `exp(ξ) = X̂ X⁻¹` and `ζ = θ̂ − θ`,
//! ordered `(R, v, p, d_1..d_N, b_g, b_a)`.
//!
//! All operations take a [`FilterState`] by reference and return a new one.

mod observability;

pub use observability::{
    numerical_rank, observability_matrix, single_contact_transition, unobservable_basis,
    unobservable_dim, OBSERVABILITY_RANK_TOL,
};

use crate::lie::{skew, so3_exp, so3_gamma2, so3_left_jacobian, GroupElement, LieError, Rot3, TangentVector, Vec3};
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ContactId = usize;

/// Default gravity in the world frame, m/s².
pub const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);

/// Innovation covariances with a larger condition number are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("contact {0} is not tracked")]
    UnknownContact(ContactId),
    #[error("contact {0} is already tracked")]
    DuplicateContact(ContactId),
    #[error("contact sets of the two states differ")]
    ContactMismatch,
    #[error("innovation covariance is not invertible (condition number {0:e})")]
    IllConditioned(f64),
    #[error("measurement matrices have inconsistent shapes")]
    MeasurementShape,
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Orientation, velocity and position of the body in the world frame, plus
/// the world positions of the tracked contact points in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct NavState {
    pub rotation: Rot3,
    pub velocity: Vec3,
    pub position: Vec3,
    pub contacts: IndexMap<ContactId, Vec3>,
}

impl NavState {
    pub fn new(rotation: Rot3, velocity: Vec3, position: Vec3) -> Self {
        Self {
            rotation,
            velocity,
            position,
            contacts: IndexMap::new(),
        }
    }

    pub fn with_contacts(mut self, contacts: impl IntoIterator<Item = (ContactId, Vec3)>) -> Self {
        self.contacts.extend(contacts);
        self
    }

    /// Embedding in SE_{N+2}(3): columns `(v, p, d_1, ..., d_N)`.
    pub fn to_group(&self) -> GroupElement {
        let mut cols = Vec::with_capacity(2 + self.contacts.len());
        cols.push(self.velocity);
        cols.push(self.position);
        cols.extend(self.contacts.values().copied());
        GroupElement::new(self.rotation, cols)
    }

    /// Replaces the numeric content with that of `g`, keeping contact ids.
    pub fn set_from_group(&mut self, g: &GroupElement) {
        debug_assert_eq!(g.num_columns(), 2 + self.contacts.len());
        self.rotation = g.rotation;
        self.velocity = g.columns[0];
        self.position = g.columns[1];
        for (d, c) in self.contacts.values_mut().zip(&g.columns[2..]) {
            *d = *c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.position.iter().all(|x| x.is_finite())
            && self.contacts.values().all(|d| d.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuBias {
    pub gyro: Vec3,
    pub accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub gyro: Vec3,
    pub accel: Vec3,
    pub timestamp: f64,
}

impl ImuSample {
    fn is_finite(&self) -> bool {
        self.gyro.iter().chain(self.accel.iter()).all(|x| x.is_finite())
    }
}

/// Forward-kinematics measurement of one contact point.
///
/// `jacobian` is the 3×M linear-velocity Jacobian at the measured joint angles
/// and `encoder_cov` the M×M encoder noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicMeasurement {
    pub contact_id: ContactId,
    pub fk_position: Vec3,
    pub fk_rotation: Rot3,
    pub jacobian: DMatrix<f64>,
    pub encoder_cov: DMatrix<f64>,
}

impl KinematicMeasurement {
    /// Body-frame position noise covariance `J Σ Jᵀ`.
    fn body_noise(&self) -> Result<Matrix3<f64>, FilterError> {
        let m = self.encoder_cov.nrows();
        if self.jacobian.nrows() != 3 || self.jacobian.ncols() != m || self.encoder_cov.ncols() != m {
            return Err(FilterError::MeasurementShape);
        }
        let n = &self.jacobian * &self.encoder_cov * self.jacobian.transpose();
        Ok(n.fixed_view::<3, 3>(0, 0).into_owned())
    }
}

/// Isotropic noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// rad/s
    pub gyro_std: f64,
    /// m/s²
    pub accel_std: f64,
    /// rad/s, random-walk driving noise
    pub gyro_bias_std: f64,
    /// m/s², random-walk driving noise
    pub accel_bias_std: f64,
    /// m/s
    pub contact_vel_std: f64,
    /// rad
    pub encoder_std: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            gyro_std: 0.002,
            accel_std: 0.04,
            gyro_bias_std: 0.001,
            accel_bias_std: 0.001,
            contact_vel_std: 0.05,
            encoder_std: 1.0_f64.to_radians(),
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            gyro_std: 0.0,
            accel_std: 0.0,
            gyro_bias_std: 0.0,
            accel_bias_std: 0.0,
            contact_vel_std: 0.0,
            encoder_std: 0.0,
        }
    }

    /// Continuous-time densities equivalent to white noise with these
    /// per-sample standard deviations, for IMU samples at `imu_rate` and
    /// contact-velocity samples at `encoder_rate`: `σ_c = σ_d / √rate`.
    /// Encoder noise is a measurement noise and bias random walks are
    /// already densities, so both are kept.
    pub fn sampled_to_density(&self, imu_rate: f64, encoder_rate: f64) -> Self {
        Self {
            gyro_std: self.gyro_std / imu_rate.sqrt(),
            accel_std: self.accel_std / imu_rate.sqrt(),
            contact_vel_std: self.contact_vel_std / encoder_rate.sqrt(),
            ..*self
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.gyro_std,
            self.accel_std,
            self.gyro_bias_std,
            self.accel_bias_std,
            self.contact_vel_std,
            self.encoder_std,
        ]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Per-axis initial standard deviations of the state error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStd {
    /// rad
    pub orientation: f64,
    pub velocity: f64,
    pub position: f64,
    pub contact: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl Default for InitialStd {
    fn default() -> Self {
        Self {
            orientation: 30.0_f64.to_radians(),
            velocity: 1.0,
            position: 0.1,
            contact: 0.1,
            gyro_bias: 0.005,
            accel_bias: 0.05,
        }
    }
}

impl InitialStd {
    /// Diagonal covariance for `contacts` contact points. The bias block is
    /// zero when biases are not estimated.
    pub fn covariance(&self, contacts: usize, estimate_bias: bool) -> DMatrix<f64> {
        let layout = Layout::new(contacts);
        let mut diag = DVector::zeros(layout.dim());
        let mut fill = |start: usize, std: f64| {
            diag.rows_mut(start, 3).fill(std * std);
        };
        fill(Layout::ROT, self.orientation);
        fill(Layout::VEL, self.velocity);
        fill(Layout::POS, self.position);
        for i in 0..contacts {
            fill(layout.contact(i), self.contact);
        }
        if estimate_bias {
            fill(layout.gyro_bias(), self.gyro_bias);
            fill(layout.accel_bias(), self.accel_bias);
        }
        DMatrix::from_diagonal(&diag)
    }
}

/// Index layout of the augmented error vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub contacts: usize,
}

impl Layout {
    pub const ROT: usize = 0;
    pub const VEL: usize = 3;
    pub const POS: usize = 6;

    pub fn new(contacts: usize) -> Self {
        Self { contacts }
    }

    pub fn contact(&self, i: usize) -> usize {
        9 + 3 * i
    }

    /// Dimension of the group part, 3(K+1) with K = N + 2.
    pub fn group_dim(&self) -> usize {
        9 + 3 * self.contacts
    }

    pub fn gyro_bias(&self) -> usize {
        self.group_dim()
    }

    pub fn accel_bias(&self) -> usize {
        self.group_dim() + 3
    }

    pub fn dim(&self) -> usize {
        self.group_dim() + 6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub nav: NavState,
    pub bias: ImuBias,
    pub cov: DMatrix<f64>,
    /// Last measured contact-frame orientation per contact, used to rotate
    /// the contact-velocity noise into the body frame.
    pub contact_frames: IndexMap<ContactId, Rot3>,
}

impl FilterState {
    pub fn new(nav: NavState, bias: ImuBias, cov: DMatrix<f64>) -> Self {
        let contact_frames = nav.contacts.keys().map(|&id| (id, Rot3::identity())).collect();
        Self {
            nav,
            bias,
            cov,
            contact_frames,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.nav.contacts.len())
    }

    pub fn contact_index(&self, id: ContactId) -> Option<usize> {
        self.nav.contacts.get_index_of(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub gravity: Vec3,
    pub noise: NoiseParams,
    pub estimate_bias: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            gravity: GRAVITY,
            noise: NoiseParams::default(),
            estimate_bias: true,
        }
    }
}

/// Continuous process model `d/dt X = f(X)` in matrix form for constant
/// bias-corrected inputs: `Ṙ = R skew(ω)`, `v̇ = R a + g`, `ṗ = v`, `ḋ = 0`.
pub fn process_model(x: &GroupElement, omega: &Vec3, accel: &Vec3, gravity: &Vec3) -> DMatrix<f64> {
    let dim = 3 + x.num_columns();
    let r = x.rotation;
    let v = x.columns[0];
    let mut f = DMatrix::zeros(dim, dim);
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * skew(omega)));
    f.fixed_view_mut::<3, 1>(0, 3).copy_from(&(r * accel + gravity));
    f.fixed_view_mut::<3, 1>(0, 4).copy_from(&v);
    f
}

/// Exact strapdown step for bias-corrected body rate `omega` and specific
/// force `accel` held constant over `dt`:
///
/// ```text
/// R⁺ = R Exp(ω dt)
/// v⁺ = v + R Γ₁(ω dt) a dt + g dt
/// p⁺ = p + v dt + R Γ₂(ω dt) a dt² + ½ g dt²
/// ```
///
/// This is a right multiplication by a body-frame increment followed by a
/// left action of gravity and time, so two states driven by the same input
/// keep an exactly log-linear right-invariant error.
pub fn strapdown_step(
    rotation: &Rot3,
    velocity: &Vec3,
    position: &Vec3,
    omega: &Vec3,
    accel: &Vec3,
    dt: f64,
    gravity: &Vec3,
) -> (Rot3, Vec3, Vec3) {
    let phi = omega * dt;
    let r = rotation * so3_exp(&phi);
    let v = velocity + rotation * so3_left_jacobian(&phi) * accel * dt + gravity * dt;
    let p = position
        + velocity * dt
        + rotation * so3_gamma2(&phi) * accel * (dt * dt)
        + gravity * (0.5 * dt * dt);
    (r, v, p)
}

/// `exp_m(A Δt)` for the error-dynamics matrix.
///
/// The group block of A is nilpotent of degree 3 and the bias block is zero,
/// so A⁴ = 0 and the series terminates after the cubic term.
pub fn transition_matrix(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let m = a * dt;
    let m2 = &m * &m;
    let m3 = &m2 * &m;
    DMatrix::identity(n, n) + &m + m2 * 0.5 + m3 * (1.0 / 6.0)
}

pub fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Block-diagonal adjoint `blockdiag(Ad_X, I_6)` of the augmented state.
fn augmented_adjoint(x: &GroupElement) -> DMatrix<f64> {
    let g = x.dof();
    let mut m = DMatrix::identity(g + 6, g + 6);
    m.view_mut((0, 0), (g, g)).copy_from(&x.adjoint());
    m
}

/// Solves `S X = B` for symmetric positive definite `S`, rejecting
/// ill-conditioned `S`.
pub(crate) fn spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, FilterError> {
    let eig = s.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !max.is_finite() {
        return Err(FilterError::IllConditioned(f64::INFINITY));
    }
    let cond = max / min;
    if cond > MAX_INNOVATION_CONDITION {
        return Err(FilterError::IllConditioned(cond));
    }
    let chol = s
        .clone()
        .cholesky()
        .ok_or(FilterError::IllConditioned(cond))?;
    Ok(chol.solve(b))
}

/// The right-invariant EKF with optional IMU-bias augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RightInvariantEkf {
    pub config: FilterConfig,
}

impl RightInvariantEkf {
    pub fn new(config: FilterConfig) -> Self {
        Self { config }
    }

    /// State with diagonal initial covariance from `std`.
    pub fn initial_state(&self, nav: NavState, bias: ImuBias, std: &InitialStd) -> FilterState {
        let cov = std.covariance(nav.contacts.len(), self.config.estimate_bias);
        FilterState::new(nav, bias, cov)
    }

    /// Linearized error-dynamics matrix A_t.
    ///
    /// Without bias estimation only the `skew(g)` and identity blocks are
    /// present and A does not depend on the state.
    pub fn build_a(&self, state: &FilterState) -> DMatrix<f64> {
        let layout = state.layout();
        let n = layout.dim();
        let mut a = DMatrix::zeros(n, n);
        a.fixed_view_mut::<3, 3>(Layout::VEL, Layout::ROT)
            .copy_from(&skew(&self.config.gravity));
        a.fixed_view_mut::<3, 3>(Layout::POS, Layout::VEL)
            .copy_from(&Matrix3::identity());

        if self.config.estimate_bias {
            let nav = &state.nav;
            let r = nav.rotation;
            let bg = layout.gyro_bias();
            let ba = layout.accel_bias();
            a.fixed_view_mut::<3, 3>(Layout::ROT, bg).copy_from(&-r);
            a.fixed_view_mut::<3, 3>(Layout::VEL, bg)
                .copy_from(&(-skew(&nav.velocity) * r));
            a.fixed_view_mut::<3, 3>(Layout::POS, bg)
                .copy_from(&(-skew(&nav.position) * r));
            for (i, d) in nav.contacts.values().enumerate() {
                a.fixed_view_mut::<3, 3>(layout.contact(i), bg)
                    .copy_from(&(-skew(d) * r));
            }
            a.fixed_view_mut::<3, 3>(Layout::VEL, ba).copy_from(&-r);
        }
        a
    }

    /// Covariance of the continuous noise vector
    /// `(w_g, w_a, 0, fk_R w_v per contact, w_bg, w_ba)`.
    pub fn noise_covariance(&self, state: &FilterState) -> DMatrix<f64> {
        let layout = state.layout();
        let noise = &self.config.noise;
        let mut q = DMatrix::zeros(layout.dim(), layout.dim());
        let iso = |s: f64| Matrix3::identity() * (s * s);
        q.fixed_view_mut::<3, 3>(Layout::ROT, Layout::ROT)
            .copy_from(&iso(noise.gyro_std));
        q.fixed_view_mut::<3, 3>(Layout::VEL, Layout::VEL)
            .copy_from(&iso(noise.accel_std));
        for (i, id) in state.nav.contacts.keys().enumerate() {
            let frame = state
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

    pub fn propagate(
        &self,
        state: &FilterState,
        imu: &ImuSample,
        dt: f64,
    ) -> Result<FilterState, FilterError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(FilterError::BadTimeStep(dt));
        }
        if !imu.is_finite() {
            return Err(FilterError::NonFinite("imu sample"));
        }
        if !state.nav.is_finite() {
            return Err(FilterError::NonFinite("state"));
        }

        let a = self.build_a(state);
        let phi = transition_matrix(&a, dt);
        let adj = augmented_adjoint(&state.nav.to_group());
        let q_cont = &adj * self.noise_covariance(state) * adj.transpose();
        let q_disc = &phi * q_cont * phi.transpose() * dt;
        let cov = symmetrize(&(&phi * &state.cov * phi.transpose() + q_disc));

        let nav = &state.nav;
        let omega = imu.gyro - state.bias.gyro;
        let accel = imu.accel - state.bias.accel;
        let (r, v, p) = strapdown_step(
            &nav.rotation,
            &nav.velocity,
            &nav.position,
            &omega,
            &accel,
            dt,
            &self.config.gravity,
        );

        let mut next = state.clone();
        next.nav.rotation = r;
        next.nav.velocity = v;
        next.nav.position = p;
        next.cov = cov;
        Ok(next)
    }

    /// Joint right-invariant update with the forward-kinematics measurements
    /// of any subset of the tracked contacts.
    pub fn update_kinematics(
        &self,
        state: &FilterState,
        measurements: &[KinematicMeasurement],
    ) -> Result<FilterState, FilterError> {
        if measurements.is_empty() {
            return Ok(state.clone());
        }
        let layout = state.layout();
        let n = layout.dim();
        let m = 3 * measurements.len();
        let nav = &state.nav;
        let r = nav.rotation;

        let mut h = DMatrix::zeros(m, n);
        let mut noise = DMatrix::zeros(m, m);
        let mut innovation = DVector::zeros(m);
        for (j, meas) in measurements.iter().enumerate() {
            let idx = state
                .contact_index(meas.contact_id)
                .ok_or(FilterError::UnknownContact(meas.contact_id))?;
            let row = 3 * j;
            h.fixed_view_mut::<3, 3>(row, Layout::POS)
                .copy_from(&-Matrix3::identity());
            h.fixed_view_mut::<3, 3>(row, layout.contact(idx))
                .copy_from(&Matrix3::identity());
            noise
                .fixed_view_mut::<3, 3>(row, row)
                .copy_from(&(r * meas.body_noise()? * r.transpose()));
            let d = nav.contacts[idx];
            innovation
                .fixed_rows_mut::<3>(row)
                .copy_from(&(r * meas.fk_position + nav.position - d));
        }
        if !innovation.iter().all(|x| x.is_finite()) {
            return Err(FilterError::NonFinite("measurement"));
        }

        let ph_t = &state.cov * h.transpose();
        let s = symmetrize(&(&h * &ph_t + noise));
        // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P.
        let gain = spd_solve(&s, &ph_t.transpose())?.transpose();
        let correction = &gain * innovation;

        let g = layout.group_dim();
        let xi = TangentVector::new(correction.rows(0, g).into_owned())?;
        let corrected = GroupElement::exp(&xi).compose(&nav.to_group())?;

        let mut next = state.clone();
        next.nav.set_from_group(&corrected);
        if self.config.estimate_bias {
            next.bias.gyro += correction.fixed_rows::<3>(g).into_owned();
            next.bias.accel += correction.fixed_rows::<3>(g + 3).into_owned();
        }
        let ikh = DMatrix::identity(n, n) - &gain * &h;
        next.cov = symmetrize(&(ikh * &state.cov));
        for meas in measurements {
            next.contact_frames.insert(meas.contact_id, meas.fk_rotation);
        }
        Ok(next)
    }

    /// Starts tracking a new contact at `d̂ = p̂ + R̂ fk_p`.
    ///
    /// The new error block is `ξ^d = ξ^p + R̂ J_v w^α`, so its covariance rows
    /// copy the position rows and gain `R̂ J Σ Jᵀ R̂ᵀ` on the diagonal. The new
    /// block is inserted just before the bias blocks.
    pub fn add_contact(
        &self,
        state: &FilterState,
        meas: &KinematicMeasurement,
    ) -> Result<FilterState, FilterError> {
        let id = meas.contact_id;
        if state.nav.contacts.contains_key(&id) {
            return Err(FilterError::DuplicateContact(id));
        }
        let nav = &state.nav;
        let r = nav.rotation;
        let d = nav.position + r * meas.fk_position;
        if !d.iter().all(|x| x.is_finite()) {
            return Err(FilterError::NonFinite("measurement"));
        }
        let added_noise = r * meas.body_noise()? * r.transpose();

        let old = state.layout();
        let new_idx = old.group_dim();
        let mut cov = insert_copied_block(&state.cov, new_idx, Layout::POS);
        let mut block = cov.fixed_view_mut::<3, 3>(new_idx, new_idx);
        block += (added_noise + added_noise.transpose()) * 0.5;

        let mut next = state.clone();
        next.nav.contacts.insert(id, d);
        next.contact_frames.insert(id, meas.fk_rotation);
        next.cov = cov;
        Ok(next)
    }

    /// Marginalizes a contact by deleting its rows and columns.
    pub fn remove_contact(&self, state: &FilterState, id: ContactId) -> Result<FilterState, FilterError> {
        remove_contact_block(state, id)
    }
}

/// Inserts three rows/columns at `at` that duplicate rows/columns `source`
/// (which must lie before `at`), i.e. `F P Fᵀ` for the map that copies that
/// 3-block.
pub(crate) fn insert_copied_block(p: &DMatrix<f64>, at: usize, source: usize) -> DMatrix<f64> {
    debug_assert!(source + 3 <= at);
    let n = p.nrows();
    let map = |i: usize| -> usize {
        if i < at {
            i
        } else if i < at + 3 {
            source + (i - at)
        } else {
            i - 3
        }
    };
    DMatrix::from_fn(n + 3, n + 3, |i, j| p[(map(i), map(j))])
}

pub(crate) fn remove_contact_block(state: &FilterState, id: ContactId) -> Result<FilterState, FilterError> {
    let idx = state
        .contact_index(id)
        .ok_or(FilterError::UnknownContact(id))?;
    let start = state.layout().contact(idx);
    let mut next = state.clone();
    next.cov = state.cov.clone().remove_rows(start, 3).remove_columns(start, 3);
    next.nav.contacts.shift_remove(&id);
    next.contact_frames.shift_remove(&id);
    Ok(next)
}

/// `log(X̂ X⁻¹)` between two navigation states with the same contact set.
/// Contacts are matched by id and ordered as in `estimate`.
pub fn right_invariant_error(truth: &NavState, estimate: &NavState) -> Result<TangentVector, FilterError> {
    let aligned = align_contacts(truth, estimate)?;
    let e = estimate.to_group().compose(&aligned.to_group().inverse())?;
    Ok(e.log())
}

/// `truth` with its contacts reordered to match `estimate`.
pub(crate) fn align_contacts(truth: &NavState, estimate: &NavState) -> Result<NavState, FilterError> {
    if truth.contacts.len() != estimate.contacts.len() {
        return Err(FilterError::ContactMismatch);
    }
    let mut aligned = NavState::new(truth.rotation, truth.velocity, truth.position);
    for id in estimate.contacts.keys() {
        let d = truth.contacts.get(id).ok_or(FilterError::ContactMismatch)?;
        aligned.contacts.insert(*id, *d);
    }
    Ok(aligned)
}

/// Largest asymmetry and smallest eigenvalue of a covariance.
pub fn covariance_health(p: &DMatrix<f64>) -> (f64, f64) {
    let asym = (p - p.transpose()).abs().max();
    let min_eig = symmetrize(p).symmetric_eigen().eigenvalues.min();
    (asym, min_eig)
}
