//! A common stateful interface over the two filters, and the NEES metric.

use inekf::filter::{right_invariant_error, ContactId, FilterConfig, Layout};
use inekf::lie::{skew, Vec3};
use inekf::qekf::{qekf_error, QekfState, QuaternionEkf};
use inekf::{
    FilterError, FilterState, ImuBias, ImuSample, InitialStd, KinematicMeasurement, NavState,
    RightInvariantEkf,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Riekf,
    Qekf,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Riekf => "riekf",
            FilterKind::Qekf => "qekf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub trait Estimator: Send {
    fn kind(&self) -> FilterKind;
    fn propagate(&mut self, imu: &ImuSample, dt: f64) -> Result<(), FilterError>;
    fn update(&mut self, measurements: &[KinematicMeasurement]) -> Result<(), FilterError>;
    fn add_contact(&mut self, meas: &KinematicMeasurement) -> Result<(), FilterError>;
    fn remove_contact(&mut self, id: ContactId) -> Result<(), FilterError>;
    fn nav(&self) -> NavState;
    fn bias(&self) -> ImuBias;
    fn covariance(&self) -> &DMatrix<f64>;

    fn tracks(&self, id: ContactId) -> bool {
        self.nav().contacts.contains_key(&id)
    }

    /// NEES over the observable subspace and that subspace's dimension.
    /// `truth` must carry the same contact ids as the estimate.
    fn nees(&self, truth: &NavState, truth_bias: &ImuBias) -> Result<(f64, usize), FilterError>;
}

pub fn make_estimator(
    kind: FilterKind,
    config: FilterConfig,
    nav: NavState,
    bias: ImuBias,
    std: &InitialStd,
) -> Box<dyn Estimator> {
    match kind {
        FilterKind::Riekf => Box::new(RiekfEstimator::new(config, nav, bias, std)),
        FilterKind::Qekf => Box::new(QekfEstimator::new(config, nav, bias, std)),
    }
}

pub struct RiekfEstimator {
    pub filter: RightInvariantEkf,
    pub state: FilterState,
}

impl RiekfEstimator {
    pub fn new(config: FilterConfig, nav: NavState, bias: ImuBias, std: &InitialStd) -> Self {
        let filter = RightInvariantEkf::new(config);
        let state = filter.initial_state(nav, bias, std);
        Self { filter, state }
    }
}

impl Estimator for RiekfEstimator {
    fn kind(&self) -> FilterKind {
        FilterKind::Riekf
    }

    fn propagate(&mut self, imu: &ImuSample, dt: f64) -> Result<(), FilterError> {
        self.state = self.filter.propagate(&self.state, imu, dt)?;
        Ok(())
    }

    fn update(&mut self, measurements: &[KinematicMeasurement]) -> Result<(), FilterError> {
        self.state = self.filter.update_kinematics(&self.state, measurements)?;
        Ok(())
    }

    fn add_contact(&mut self, meas: &KinematicMeasurement) -> Result<(), FilterError> {
        self.state = self.filter.add_contact(&self.state, meas)?;
        Ok(())
    }

    fn remove_contact(&mut self, id: ContactId) -> Result<(), FilterError> {
        self.state = self.filter.remove_contact(&self.state, id)?;
        Ok(())
    }

    fn nav(&self) -> NavState {
        self.state.nav.clone()
    }

    fn bias(&self) -> ImuBias {
        self.state.bias
    }

    fn covariance(&self) -> &DMatrix<f64> {
        &self.state.cov
    }

    fn nees(&self, truth: &NavState, truth_bias: &ImuBias) -> Result<(f64, usize), FilterError> {
        let layout = self.state.layout();
        let with_bias = self.filter.config.estimate_bias;
        let n = if with_bias { layout.dim() } else { layout.group_dim() };
        let xi = right_invariant_error(truth, &self.state.nav)?;
        let mut e = DVector::zeros(n);
        e.rows_mut(0, layout.group_dim()).copy_from(xi.as_vector());
        if with_bias {
            e.fixed_rows_mut::<3>(layout.gyro_bias())
                .copy_from(&(self.state.bias.gyro - truth_bias.gyro));
            e.fixed_rows_mut::<3>(layout.accel_bias())
                .copy_from(&(self.state.bias.accel - truth_bias.accel));
        }
        let p = self.state.cov.view((0, 0), (n, n)).into_owned();
        let null = riekf_null_basis(layout, n);
        let value = nees(&e, &p, &null).ok_or(FilterError::NonFinite("covariance"))?;
        Ok((value, n - null.ncols()))
    }
}

pub struct QekfEstimator {
    pub filter: QuaternionEkf,
    pub state: QekfState,
}

impl QekfEstimator {
    pub fn new(config: FilterConfig, nav: NavState, bias: ImuBias, std: &InitialStd) -> Self {
        let filter = QuaternionEkf::new(config);
        let state = filter.initial_state(nav, bias, std);
        Self { filter, state }
    }
}

impl Estimator for QekfEstimator {
    fn kind(&self) -> FilterKind {
        FilterKind::Qekf
    }

    fn propagate(&mut self, imu: &ImuSample, dt: f64) -> Result<(), FilterError> {
        self.state = self.filter.propagate(&self.state, imu, dt)?;
        Ok(())
    }

    fn update(&mut self, measurements: &[KinematicMeasurement]) -> Result<(), FilterError> {
        self.state = self.filter.update_kinematics(&self.state, measurements)?;
        Ok(())
    }

    fn add_contact(&mut self, meas: &KinematicMeasurement) -> Result<(), FilterError> {
        self.state = self.filter.add_contact(&self.state, meas)?;
        Ok(())
    }

    fn remove_contact(&mut self, id: ContactId) -> Result<(), FilterError> {
        self.state = self.filter.remove_contact(&self.state, id)?;
        Ok(())
    }

    fn nav(&self) -> NavState {
        self.state.nav()
    }

    fn bias(&self) -> ImuBias {
        self.state.bias
    }

    fn covariance(&self) -> &DMatrix<f64> {
        &self.state.cov
    }

    fn nees(&self, truth: &NavState, truth_bias: &ImuBias) -> Result<(f64, usize), FilterError> {
        let with_bias = self.filter.config.estimate_bias;
        let e = qekf_error(truth, truth_bias, &self.state, with_bias)?;
        let n = e.len();
        let p = self.state.cov.view((0, 0), (n, n)).into_owned();
        let null = qekf_null_basis(&self.state, n);
        let value = nees(&e, &p, &null).ok_or(FilterError::NonFinite("covariance"))?;
        Ok((value, n - null.ncols()))
    }
}

/// Translation of the body and all contacts together along each world axis.
fn translation_directions(layout: Layout, basis: &mut DMatrix<f64>, first_col: usize) {
    for axis in 0..3 {
        let col = first_col + axis;
        basis[(Layout::POS + axis, col)] = 1.0;
        for i in 0..layout.contacts {
            basis[(layout.contact(i) + axis, col)] = 1.0;
        }
    }
}

/// Unobservable directions of the right-invariant error: a rotation about
/// world z and a common translation. Both are constant in these
/// coordinates.
pub fn riekf_null_basis(layout: Layout, n: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(n, 4);
    basis[(Layout::ROT + 2, 0)] = 1.0;
    translation_directions(layout, &mut basis, 1);
    basis
}

/// Unobservable directions of the quaternion filter's error, linearized at
/// its estimate: a world-yaw rotation `(R̂ᵀe_z, e_z × v̂, e_z × p̂, e_z × d̂)`
/// and a common translation.
pub fn qekf_null_basis(state: &QekfState, n: usize) -> DMatrix<f64> {
    let layout = state.layout();
    let ez = Vec3::z();
    let yaw = skew(&ez);
    let mut basis = DMatrix::zeros(n, 4);
    let mut put = |row: usize, v: Vec3| basis.fixed_view_mut::<3, 1>(row, 0).copy_from(&v);
    put(Layout::ROT, state.rotation().transpose() * ez);
    put(Layout::VEL, yaw * state.velocity);
    put(Layout::POS, yaw * state.position);
    for (i, d) in state.contacts.values().enumerate() {
        put(layout.contact(i), yaw * d);
    }
    translation_directions(layout, &mut basis, 1);
    basis
}

/// `yᵀ (UᵀPU)⁻¹ y` with `y = Uᵀe`, where the columns of `U` are an
/// orthonormal basis of the complement of `null_basis`. `None` when the
/// projected covariance is not positive definite.
pub fn nees(error: &DVector<f64>, cov: &DMatrix<f64>, null_basis: &DMatrix<f64>) -> Option<f64> {
    let u = complement_basis(null_basis, error.len());
    let y = u.transpose() * error;
    let s = u.transpose() * cov * &u;
    let chol = s.cholesky()?;
    let value = y.dot(&chol.solve(&y));
    value.is_finite().then_some(value)
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `basis`, by Gram–Schmidt over the null columns followed by the
/// coordinate axes.
pub fn complement_basis(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(n);
    for c in 0..basis.ncols() {
        push_orthonormal(basis.column(c).into_owned(), &mut kept);
    }
    let null_rank = kept.len();
    for i in 0..n {
        if kept.len() == n {
            break;
        }
        push_orthonormal(DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 }), &mut kept);
    }
    DMatrix::from_columns(&kept[null_rank..])
}

/// Appends the normalized component of `v` orthogonal to `kept`, unless it
/// is negligible.
fn push_orthonormal(mut v: DVector<f64>, kept: &mut Vec<DVector<f64>>) {
    // Two passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for q in kept.iter() {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
    }
    let norm = v.norm();
    if norm > 1e-6 {
        kept.push(v / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use inekf::lie::so3_exp;
    use inekf::qekf::to_right_invariant_error;

    #[test]
    fn nees_trivial_cases() {
        let n = 6;
        let null = DMatrix::from_fn(n, 1, |r, _| if r == 5 { 1.0 } else { 0.0 });
        let p = DMatrix::identity(n, n);
        assert_eq!(nees(&DVector::zeros(n), &p, &null), Some(0.0));
        let mut e = DVector::zeros(n);
        e[2] = 1.0;
        assert!((nees(&e, &p, &null).unwrap() - 1.0).abs() < 1e-14);
        // Errors along the null direction do not count.
        e[5] = 3.0;
        assert!((nees(&e, &p, &null).unwrap() - 1.0).abs() < 1e-14);
        assert!(nees(&e, &DMatrix::zeros(n, n), &null).is_none());
    }

    #[test]
    fn nees_matches_marginal_quadratic_form() {
        // With the null space on the last coordinates the NEES equals the
        // plain quadratic form of the leading marginal.
        let a = DMatrix::from_fn(5, 5, |r, c| ((r * 7 + c * 3) % 5) as f64 + if r == c { 6.0 } else { 0.0 });
        let p = &a * a.transpose();
        let e = DVector::from_vec(vec![0.3, -1.2, 0.7, 2.0, -4.0]);
        let null = DMatrix::from_fn(5, 2, |r, c| if r == 3 + c { 1.0 } else { 0.0 });
        let marginal = p.view((0, 0), (3, 3)).into_owned();
        let head = e.rows(0, 3).into_owned();
        let expected = head.dot(&marginal.cholesky().unwrap().solve(&head));
        assert!((nees(&e, &p, &null).unwrap() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let layout = Layout::new(2);
        let n = layout.dim();
        let null = riekf_null_basis(layout, n);
        let u = complement_basis(&null, n);
        assert_eq!(u.ncols(), n - 4);
        let gram = u.transpose() * &u;
        assert!((gram - DMatrix::identity(n - 4, n - 4)).abs().max() < 1e-12);
        assert!((u.transpose() * &null).abs().max() < 1e-12);
    }

    #[test]
    fn null_bases_agree_through_error_map() {
        // The quaternion filter's unobservable directions, pushed through
        // its first-order map to the right-invariant error, span the same
        // space as the right-invariant ones.
        let nav = NavState::new(
            so3_exp(&Vec3::new(0.2, -0.4, 1.0)),
            Vec3::new(0.3, -0.1, 0.2),
            Vec3::new(1.0, 2.0, 0.9),
        )
        .with_contacts([(0, Vec3::new(1.1, 2.2, 0.0)), (1, Vec3::new(0.8, 1.7, 0.0))]);
        let state = QekfState::new(nav, ImuBias::default(), DMatrix::identity(21, 21));
        let t = to_right_invariant_error(&state);
        let mapped = &t * qekf_null_basis(&state, 21);
        let ri = riekf_null_basis(state.layout(), 21);
        let u = complement_basis(&ri, 21);
        assert!((u.transpose() * mapped).abs().max() < 1e-12);
    }
}
