//! Exponential and logarithmic maps between S² and its tangent planes.

use nalgebra::Vector2;

use crate::eigen::orthogonal_unit;
use crate::error::{Error, Result};
use crate::geometry::{UnitVec3, Vec3};

pub type Tangent2 = Vector2<f64>;

/// Orthonormal tangent basis at `base`: the first axis is the component of
/// the global axis least aligned with `base`, the second is `base × first`.
pub fn tangent_basis(base: &UnitVec3) -> (Vec3, Vec3) {
    let e1 = orthogonal_unit(base);
    let e2 = base.cross(&e1);
    (e1, e2)
}

/// Great-circle angle between two unit vectors.
pub fn angle_between(a: &UnitVec3, b: &UnitVec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Tangent coordinates of `p` at `base`; the norm equals the geodesic distance.
pub fn riemann_log(base: &UnitVec3, p: &UnitVec3) -> Result<Tangent2> {
    let cos = base.dot(p);
    if cos <= -1.0 + 1e-9 {
        return Err(Error::AntipodalPoint);
    }
    let (e1, e2) = tangent_basis(base);
    Ok(log_in_basis(base, &e1, &e2, p))
}

pub(crate) fn log_in_basis(base: &UnitVec3, e1: &Vec3, e2: &Vec3, p: &UnitVec3) -> Tangent2 {
    let cos = base.dot(p);
    let perp = p.into_inner() - base.into_inner() * cos;
    let sin = perp.norm();
    if sin == 0.0 {
        return Tangent2::zeros();
    }
    let theta = sin.atan2(cos);
    Tangent2::new(perp.dot(e1), perp.dot(e2)) * (theta / sin)
}

/// Walks the geodesic from `base` with initial direction `v` for arc length `|v|`.
pub fn riemann_exp(base: &UnitVec3, v: &Tangent2) -> UnitVec3 {
    let (e1, e2) = tangent_basis(base);
    exp_in_basis(base, &e1, &e2, v)
}

pub(crate) fn exp_in_basis(base: &UnitVec3, e1: &Vec3, e2: &Vec3, v: &Tangent2) -> UnitVec3 {
    let theta = v.norm();
    if theta == 0.0 {
        return *base;
    }
    let dir = (e1 * v.x + e2 * v.y) / theta;
    UnitVec3::new_normalize(base.into_inner() * theta.cos() + dir * theta.sin())
}

/// `n` near-uniform directions on the sphere (Fibonacci spiral).
pub fn fibonacci_sphere(n: usize) -> Vec<UnitVec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            UnitVec3::new_normalize(Vec3::new(r * phi.cos(), r * phi.sin(), z))
        })
        .collect()
}
