//! Reproducible noise source.
//!
//! Streams are driven by ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`)
//! and Gaussian samples come from the cosine branch of the Box–Muller
//! transform, one normal deviate per pair of uniforms:
//!
//! ```text
//! u1 = 1 − U[0,1),  u2 = U[0,1),  z = sqrt(−2 ln u1) · cos(2π u2)
//! ```
//!
//! where `U[0,1)` is `rand`'s 53-bit `f64` conversion. Any implementation of
//! the same three steps reproduces the streams bit for bit (up to libm).

use crate::lie::Vec3;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use std::f64::consts::TAU;

pub type NoiseRng = ChaCha20Rng;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Three independent N(0, std²) draws, in x, y, z order.
pub fn normal_vec3<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Vec3 {
    let x = standard_normal(rng);
    let y = standard_normal(rng);
    let z = standard_normal(rng);
    Vec3::new(x, y, z) * std
}

/// Uniform draw on `[-half_width, half_width)`; zero width gives zero.
pub fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * half_width
}
