//! Contact-aided invariant extended Kalman filtering for legged robots.
//!
//! * [`lie`]: the matrix Lie group SE_K(3) with closed-form exponential,
//!   logarithm and adjoint.
//! * [`filter`]: the right-invariant EKF fusing IMU propagation with leg
//!   forward-kinematics corrections, plus its discrete observability analysis.
//! * [`qekf`]: a quaternion error-state EKF over the same state, used as a
//!   baseline.
//! * [`kinematics`]: a 3-DOF point-foot leg model.
//! * [`sim`]: a kinematic biped gait generator producing ground truth and
//!   noisy sensor streams.

pub mod filter;
pub mod kinematics;
pub mod lie;
pub mod qekf;
pub mod sim;

pub use filter::{
    FilterConfig, FilterError, FilterState, ImuBias, ImuSample, InitialStd, KinematicMeasurement,
    NavState, NoiseParams, RightInvariantEkf,
};
pub use lie::{GroupElement, TangentVector};
