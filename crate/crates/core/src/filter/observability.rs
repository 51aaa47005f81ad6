//! Discrete observability of the bias-free single-contact filter.
//!
//! Because the invariant error dynamics do not depend on the state, the
//! observability matrix `[H; HΦ; HΦ²; ...]` is a constant and its null space
//! identifies the unobservable directions exactly: absolute position (the
//! body and contact translating together) and rotation about gravity.

use super::{transition_matrix, FilterConfig, FilterState, ImuBias, NavState, RightInvariantEkf};
use crate::lie::{Rot3, Vec3};
use nalgebra::{DMatrix, Matrix3};

/// Singular values below this fraction of the largest count as zero.
pub const OBSERVABILITY_RANK_TOL: f64 = 1e-8;

/// Φ = exp_m(AΔt) for the 12-dimensional bias-free single-contact error.
pub fn single_contact_transition(dt: f64, gravity: Vec3) -> DMatrix<f64> {
    let filter = RightInvariantEkf::new(FilterConfig {
        gravity,
        estimate_bias: false,
        ..FilterConfig::default()
    });
    let nav = NavState::new(Rot3::identity(), Vec3::zeros(), Vec3::zeros())
        .with_contacts([(0, Vec3::zeros())]);
    let state = FilterState::new(nav, ImuBias::default(), DMatrix::zeros(18, 18));
    let a = filter.build_a(&state).view((0, 0), (12, 12)).into_owned();
    transition_matrix(&a, dt)
}

/// Stacks `H Φ^k` for `k = 0..n_steps`, with `H = [0 0 −I I]`.
pub fn observability_matrix(n_steps: usize, dt: f64, gravity: Vec3) -> DMatrix<f64> {
    let phi = single_contact_transition(dt, gravity);
    let mut h = DMatrix::zeros(3, 12);
    h.fixed_view_mut::<3, 3>(0, 6).copy_from(&-Matrix3::identity());
    h.fixed_view_mut::<3, 3>(0, 9).copy_from(&Matrix3::identity());

    let mut o = DMatrix::zeros(3 * n_steps, 12);
    let mut row = h;
    for k in 0..n_steps {
        o.view_mut((3 * k, 0), (3, 12)).copy_from(&row);
        row = &row * &phi;
    }
    o
}

/// Zero rows appended so the SVD exposes a full right basis.
fn padded(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() >= m.ncols() {
        return m.clone();
    }
    let mut p = DMatrix::zeros(m.ncols(), m.ncols());
    p.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    p
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = padded(m).singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > OBSERVABILITY_RANK_TOL * max).count()
}

pub fn unobservable_dim(o: &DMatrix<f64>) -> usize {
    o.ncols() - numerical_rank(o)
}

/// Orthonormal basis (as columns) of the numerical null space.
pub fn unobservable_basis(o: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = padded(o).svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let max = svd.singular_values.max();
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= OBSERVABILITY_RANK_TOL * max)
        .collect();
    let mut basis = DMatrix::zeros(o.ncols(), null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::GRAVITY;
    use crate::lie::skew;
    use approx::assert_abs_diff_eq;

    #[test]
    fn transition_matches_closed_form_polynomial() {
        let dt = 0.01;
        let phi = single_contact_transition(dt, GRAVITY);
        let g = skew(&GRAVITY);
        let mut expected = DMatrix::identity(12, 12);
        expected.fixed_view_mut::<3, 3>(3, 0).copy_from(&(g * dt));
        expected.fixed_view_mut::<3, 3>(6, 0).copy_from(&(g * (0.5 * dt * dt)));
        expected.fixed_view_mut::<3, 3>(6, 3).copy_from(&(Matrix3::identity() * dt));
        assert_abs_diff_eq!(phi, expected, epsilon = 1e-12);
    }

    #[test]
    fn rank_is_eight() {
        for dt in [0.001, 0.01, 0.1] {
            let o = observability_matrix(10, dt, GRAVITY);
            assert_eq!(numerical_rank(&o), 8, "dt = {dt}");
            assert_eq!(unobservable_dim(&o), 4);
        }
    }

    #[test]
    fn null_space_is_yaw_and_translation() {
        let o = observability_matrix(10, 0.01, GRAVITY);
        let basis = unobservable_basis(&o);
        assert_eq!(basis.ncols(), 4);
        assert!((&o * &basis).norm() < 1e-10);

        // Expected directions: yaw about gravity and joint body/contact shifts.
        let mut expected = DMatrix::zeros(12, 4);
        expected[(2, 0)] = 1.0;
        for a in 0..3 {
            expected[(6 + a, 1 + a)] = 1.0;
            expected[(9 + a, 1 + a)] = 1.0;
        }
        // Each expected direction lies in span(basis).
        let proj = &basis * basis.transpose();
        for c in 0..4 {
            let e = expected.column(c).normalize();
            assert!((&proj * &e - &e).norm() < 1e-9);
        }
    }

    #[test]
    fn short_stack_is_padded() {
        let o = observability_matrix(2, 0.01, GRAVITY);
        assert_eq!(o.nrows(), 6);
        let basis = unobservable_basis(&o);
        assert_eq!(basis.ncols(), 12 - numerical_rank(&o));
    }
}
