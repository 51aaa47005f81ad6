//! Matrix Lie group machinery for SO(3) and SE_K(3).
//!
//! An element of SE_K(3) is a rotation together with K translation-like
//! columns. Its matrix embedding is the (3+K)×(3+K) block matrix
//!
//! ```text
//! [ R  c_1 ... c_K ]
//! [ 0     I_K      ]
//! ```
//!
//! For the contact-aided filter the columns are, in order, the body velocity,
//! the body position and the world position of each contact point, so
//! K = 2 + N for N contacts.
//!
//! Tangent vectors are laid out as `(ξ^R, ξ^{c_1}, ..., ξ^{c_K})`, each a
//! 3-vector, matching the column order of [`lift`].

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Rot3 = Matrix3<f64>;

/// Below this rotation angle the SO(3) coefficient functions switch to their
/// second-order Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Above this angle `so3_log` recovers the axis from the symmetric part of R.
const NEAR_PI: f64 = std::f64::consts::PI - 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tangent vector length {0} is not of the form 3(K+1) with K >= 1")]
    BadTangentLength(usize),
    #[error("matrix is not a valid SE_K(3) embedding")]
    NotAGroupElement,
}

/// The 3×3 skew-symmetric matrix with `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the axial vector of the antisymmetric part.
pub fn vee(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vec3) -> Rot3 {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(w);
    Rot3::identity() + k * a + k * k * b
}

/// Principal logarithm of a rotation, with `‖result‖ ≤ π`.
///
/// At exactly π the axis is only defined up to sign; the axis whose first
/// nonzero component is positive is returned.
pub fn so3_log(r: &Rot3) -> Vec3 {
    let axial = vee(r);
    let sin_theta = axial.norm();
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        // theta / sin(theta) ~ 1 + theta^2 / 6
        return axial * (1.0 + theta * theta / 6.0);
    }
    if theta < NEAR_PI {
        return axial * (theta / sin_theta);
    }

    // Near π: (R + Rᵀ)/2 = cos θ I + (1 - cos θ) n nᵀ.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Rot3::identity() * cos_theta) / (1.0 - cos_theta);
    let (col, _) = (0..3)
        .map(|i| (i, outer[(i, i)]))
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut axis: Vec3 = outer.column(col).into_owned();
    axis /= axis.norm();

    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    if sin_theta < 1e-12 {
        // Exactly π: fix the sign so the first nonzero component is positive.
        let first = axis.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(1.0);
        if first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// Left Jacobian of SO(3): `exp(w + δ) ≈ exp(J_l(w) δ) exp(w)`.
pub fn so3_left_jacobian(w: &Vec3) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let k = skew(w);
    Matrix3::identity() + k * b + k * k * c
}

/// `Γ₂(w) = Σ_{n≥0} skew(w)ⁿ / (n+2)! = ∫₀¹ (1 − s) exp(s w) ds`, the
/// double integral of the rotation that appears in the position increment
/// of a constant-input strapdown step.
pub fn so3_gamma2(w: &Vec3) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    // The closed form cancels catastrophically for small angles, so the
    // series is used well beyond the usual small-angle cutoff.
    let (b, c) = if theta < 1e-2 {
        (
            1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
            1.0 / 24.0 - theta2 / 720.0 + theta2 * theta2 / 40320.0,
        )
    } else {
        (
            (theta - theta.sin()) / (theta2 * theta),
            (theta2 + 2.0 * theta.cos() - 2.0) / (2.0 * theta2 * theta2),
        )
    };
    let k = skew(w);
    Matrix3::identity() * 0.5 + k * b + k * k * c
}

/// Inverse of [`so3_left_jacobian`], valid for `‖w‖ < 2π`.
pub fn so3_left_jacobian_inv(w: &Vec3) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        // 1/θ² - (1 + cos θ) / (2 θ sin θ), written with cot(θ/2) so it stays
        // finite at θ = π.
        1.0 / theta2 - 1.0 / (2.0 * theta * (0.5 * theta).tan())
    };
    let k = skew(w);
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// A tangent vector of SE_K(3), laid out as `(ξ^R, ξ^{c_1}, ..., ξ^{c_K})`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(DVector<f64>);

impl TangentVector {
    pub fn new(data: DVector<f64>) -> Result<Self, LieError> {
        let n = data.len();
        if n < 6 || !n.is_multiple_of(3) {
            return Err(LieError::BadTangentLength(n));
        }
        Ok(Self(data))
    }

    pub fn zeros(columns: usize) -> Self {
        Self(DVector::zeros(3 * (columns + 1)))
    }

    pub fn from_parts(rotation: Vec3, columns: &[Vec3]) -> Self {
        let mut v = DVector::zeros(3 * (columns.len() + 1));
        v.fixed_rows_mut::<3>(0).copy_from(&rotation);
        for (i, c) in columns.iter().enumerate() {
            v.fixed_rows_mut::<3>(3 * (i + 1)).copy_from(c);
        }
        Self(v)
    }

    /// Number of translation-like columns K.
    pub fn columns(&self) -> usize {
        self.0.len() / 3 - 1
    }

    pub fn rotation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.fixed_rows::<3>(3 * (i + 1)).into_owned()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// The map from tangent vectors to the Lie algebra: skew(ξ^R) in the top-left
/// block, ξ^{c_i} in column 3+i, zeros in the bottom K rows.
pub fn lift(xi: &TangentVector) -> DMatrix<f64> {
    let k = xi.columns();
    let mut m = DMatrix::zeros(3 + k, 3 + k);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.rotation()));
    for i in 0..k {
        m.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(&xi.column(i));
    }
    m
}

/// Reads a tangent vector back out of a Lie-algebra matrix.
pub fn unlift(m: &DMatrix<f64>) -> Result<TangentVector, LieError> {
    let n = m.nrows();
    if n < 4 || m.ncols() != n {
        return Err(LieError::NotAGroupElement);
    }
    let k = n - 3;
    let top: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let cols: Vec<Vec3> = (0..k)
        .map(|i| m.fixed_view::<3, 1>(0, 3 + i).into_owned())
        .collect();
    Ok(TangentVector::from_parts(vee(&top), &cols))
}

/// An element of SE_K(3).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub rotation: Rot3,
    pub columns: Vec<Vec3>,
}

impl GroupElement {
    pub fn new(rotation: Rot3, columns: Vec<Vec3>) -> Self {
        Self { rotation, columns }
    }

    pub fn identity(columns: usize) -> Self {
        Self {
            rotation: Rot3::identity(),
            columns: vec![Vec3::zeros(); columns],
        }
    }

    /// Number of translation-like columns K.
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Dimension of the tangent space, 3(K+1).
    pub fn dof(&self) -> usize {
        3 * (self.columns.len() + 1)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.columns.len();
        let mut m = DMatrix::identity(3 + k, 3 + k);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        for (i, c) in self.columns.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(c);
        }
        m
    }

    /// Reads an element back from its matrix embedding. The lower block must
    /// be exactly `[0 I]`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self, LieError> {
        let n = m.nrows();
        if n < 4 || m.ncols() != n {
            return Err(LieError::NotAGroupElement);
        }
        for r in 3..n {
            for c in 0..n {
                let expected = if r == c { 1.0 } else { 0.0 };
                if (m[(r, c)] - expected).abs() > 1e-9 {
                    return Err(LieError::NotAGroupElement);
                }
            }
        }
        Ok(Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            columns: (3..n)
                .map(|c| m.fixed_view::<3, 1>(0, c).into_owned())
                .collect(),
        })
    }

    fn check_same_size(&self, other: &Self) -> Result<(), LieError> {
        if self.columns.len() != other.columns.len() {
            return Err(LieError::DimensionMismatch {
                expected: self.columns.len(),
                found: other.columns.len(),
            });
        }
        Ok(())
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self, LieError> {
        self.check_same_size(other)?;
        Ok(Self {
            rotation: self.rotation * other.rotation,
            columns: self
                .columns
                .iter()
                .zip(&other.columns)
                .map(|(a, b)| self.rotation * b + a)
                .collect(),
        })
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            columns: self.columns.iter().map(|c| -(rt * c)).collect(),
        }
    }

    /// Matrix of the adjoint map: R on the diagonal blocks and `skew(c_i) R`
    /// in the first block column.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = self.dof();
        let mut ad = DMatrix::zeros(n, n);
        for b in 0..=self.columns.len() {
            ad.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(&self.rotation);
        }
        for (i, c) in self.columns.iter().enumerate() {
            ad.fixed_view_mut::<3, 3>(3 * (i + 1), 0)
                .copy_from(&(skew(c) * self.rotation));
        }
        ad
    }

    /// Closed-form exponential: rotation `so3_exp(ξ^R)`, columns
    /// `J_l(ξ^R) ξ^{c_i}`.
    pub fn exp(xi: &TangentVector) -> Self {
        let phi = xi.rotation();
        let jl = so3_left_jacobian(&phi);
        Self {
            rotation: so3_exp(&phi),
            columns: (0..xi.columns()).map(|i| jl * xi.column(i)).collect(),
        }
    }

    /// Group logarithm, the inverse of [`GroupElement::exp`] for rotation
    /// angles below π.
    pub fn log(&self) -> TangentVector {
        let phi = so3_log(&self.rotation);
        let jl_inv = so3_left_jacobian_inv(&phi);
        let cols: Vec<Vec3> = self.columns.iter().map(|c| jl_inv * c).collect();
        TangentVector::from_parts(phi, &cols)
    }

    /// Largest deviation of R from orthonormality and unit determinant.
    pub fn rotation_defect(&self) -> f64 {
        rotation_defect(&self.rotation)
    }
}

/// `‖RᵀR − I‖_F` and `|det R − 1|`, whichever is larger.
pub fn rotation_defect(r: &Rot3) -> f64 {
    let ortho = (r.transpose() * r - Rot3::identity()).norm();
    ortho.max((r.determinant() - 1.0).abs())
}

/// `exp` on a raw vector; fails unless the length is 3(K+1) with K ≥ 1.
pub fn group_exp(xi: &DVector<f64>) -> Result<GroupElement, LieError> {
    Ok(GroupElement::exp(&TangentVector::new(xi.clone())?))
}

/// `exp` onto an element with a prescribed number of columns.
pub fn group_exp_for(xi: &TangentVector, columns: usize) -> Result<GroupElement, LieError> {
    if xi.columns() != columns {
        return Err(LieError::DimensionMismatch {
            expected: 3 * (columns + 1),
            found: xi.as_vector().len(),
        });
    }
    Ok(GroupElement::exp(xi))
}

/// Rotation from ZYX Euler angles (roll about x, pitch about y, yaw about z):
/// `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Rot3 {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    Rot3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// ZYX Euler angles `(roll, pitch, yaw)` of a rotation.
pub fn euler_from_rotation(r: &Rot3) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}
