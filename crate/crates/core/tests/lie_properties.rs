//! Property tests of the SE_K(3) group operations.

use inekf::lie::{
    euler_from_rotation, rotation_from_euler, so3_exp, so3_left_jacobian, so3_left_jacobian_inv,
    so3_log, GroupElement, TangentVector, Vec3,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn vec3(max: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-max..max).prop_map(Vec3::from)
}

/// A rotation vector with angle strictly below π, where log inverts exp.
fn rotation_vector() -> impl Strategy<Value = Vec3> {
    (vec3(1.0), 0.0..3.0f64).prop_map(|(v, angle)| {
        let n = v.norm();
        if n < 1e-6 {
            Vec3::zeros()
        } else {
            v * (angle / n)
        }
    })
}

fn tangent(columns: usize) -> impl Strategy<Value = TangentVector> {
    (rotation_vector(), prop::collection::vec(vec3(5.0), columns))
        .prop_map(|(w, cols)| TangentVector::from_parts(w, &cols))
}

fn element(columns: usize) -> impl Strategy<Value = GroupElement> {
    tangent(columns).prop_map(|xi| GroupElement::exp(&xi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn so3_log_inverts_exp(w in rotation_vector()) {
        prop_assert!((so3_log(&so3_exp(&w)) - w).amax() < 1e-9);
    }

    #[test]
    fn group_log_inverts_exp(xi in tangent(3)) {
        let back = GroupElement::exp(&xi).log();
        prop_assert!((back.as_vector() - xi.as_vector()).amax() < 1e-8);
    }

    #[test]
    fn exp_of_adjoint_is_conjugation(x in element(2), xi in tangent(2)) {
        // exp(Ad_X ξ) = X exp(ξ) X⁻¹
        let mapped = TangentVector::new(x.adjoint() * xi.as_vector()).unwrap();
        let lhs = GroupElement::exp(&mapped).matrix();
        let rhs = x.matrix() * GroupElement::exp(&xi).matrix() * x.inverse().matrix();
        prop_assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn adjoint_is_a_homomorphism(a in element(2), b in element(2)) {
        let ab = a.compose(&b).unwrap();
        prop_assert!((ab.adjoint() - a.adjoint() * b.adjoint()).amax() < 1e-9);
    }

    #[test]
    fn inverse_and_associativity(a in element(1), b in element(1), c in element(1)) {
        let id = GroupElement::identity(1).matrix();
        prop_assert!((a.compose(&a.inverse()).unwrap().matrix() - &id).amax() < 1e-12);
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!((left.matrix() - right.matrix()).amax() < 1e-10);
    }

    #[test]
    fn composition_matches_matrix_product(a in element(2), b in element(2)) {
        let ab = a.compose(&b).unwrap();
        prop_assert!((ab.matrix() - a.matrix() * b.matrix()).amax() < 1e-12);
        prop_assert!(ab.rotation_defect() < 1e-12);
    }

    #[test]
    fn left_jacobian_inverse(w in rotation_vector()) {
        let product = so3_left_jacobian(&w) * so3_left_jacobian_inv(&w);
        prop_assert!((product - nalgebra::Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn left_jacobian_first_order(w in rotation_vector(), d in vec3(1.0)) {
        // exp(w + εd) ≈ exp(ε J_l(w) d) exp(w) to first order in ε.
        prop_assume!(w.norm() < 2.8);
        let eps = 1e-6;
        let exact = so3_exp(&(w + d * eps));
        let approx = so3_exp(&(so3_left_jacobian(&w) * d * eps)) * so3_exp(&w);
        prop_assert!((exact - approx).amax() < 1e-10);
    }

    #[test]
    fn euler_round_trip(roll in -3.0..3.0f64, pitch in -1.5..1.5f64, yaw in -3.0..3.0f64) {
        let (r, p, y) = euler_from_rotation(&rotation_from_euler(roll, pitch, yaw));
        prop_assert!((r - roll).abs() < 1e-9 && (p - pitch).abs() < 1e-9 && (y - yaw).abs() < 1e-9);
    }
}

#[test]
fn tangent_vector_rejects_bad_length() {
    assert!(TangentVector::new(DVector::zeros(7)).is_err());
    assert!(TangentVector::new(DVector::zeros(12)).is_ok());
}
