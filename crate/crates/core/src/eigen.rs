//! Closed-form eigen-decomposition of symmetric 3×3 matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! cubic. The eigenvector of the best-isolated eigenvalue is taken from the
//! cross products of the rows of `A - λI`; the middle one is solved inside
//! its orthogonal complement, and the last is a cross product. Degenerate
//! eigenspaces get a deterministic basis.

use nalgebra::Matrix3;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct SymEigen3 {
    /// Ascending.
    pub values: [f64; 3],
    /// Unit eigenvectors, `vectors[i]` belongs to `values[i]`.
    pub vectors: [Vec3; 3],
}

/// Flips `v` so that its first non-negligible component is positive.
pub fn lexicographic_sign(v: Vec3) -> Vec3 {
    for c in v.iter() {
        if c.abs() > 1e-12 {
            return if *c < 0.0 { -v } else { v };
        }
    }
    v
}

/// Unit vector orthogonal to `v`, built from the global axis least aligned with it.
pub fn orthogonal_unit(v: &Vec3) -> Vec3 {
    let a = v.map(f64::abs);
    let e = if a.x <= a.y && a.x <= a.z {
        Vec3::x()
    } else if a.y <= a.z {
        Vec3::y()
    } else {
        Vec3::z()
    };
    (e - v * e.dot(v)).normalize()
}

fn null_vector(m: &Matrix3<f64>) -> Option<Vec3> {
    let r0: Vec3 = m.row(0).transpose();
    let r1: Vec3 = m.row(1).transpose();
    let r2: Vec3 = m.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .unwrap();
    let n2 = best.norm_squared();
    (n2 > 1e-300).then(|| best / n2.sqrt())
}

/// Eigenvector for `value` inside the plane orthogonal to `known`.
fn complement_vector(a: &Matrix3<f64>, known: &Vec3, value: f64) -> Vec3 {
    let u = orthogonal_unit(known);
    let w = known.cross(&u);
    let m = a - Matrix3::identity() * value;
    let m00 = u.dot(&(m * u));
    let m01 = u.dot(&(m * w));
    let m11 = w.dot(&(m * w));
    let (x, y) = if m00.abs() >= m11.abs() {
        (-m01, m00)
    } else {
        (m11, -m01)
    };
    let n = x.hypot(y);
    if n > 1e-12 {
        (u * x + w * y) / n
    } else {
        u
    }
}

pub fn sym_eigen3(a: &Matrix3<f64>) -> SymEigen3 {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return SymEigen3 {
            values: [0.0; 3],
            vectors: [Vec3::z(), Vec3::x(), Vec3::y()],
        };
    }
    let b = a / scale;
    let off = b[(0, 1)].powi(2) + b[(0, 2)].powi(2) + b[(1, 2)].powi(2);
    let (mut vals, vecs) = if off <= 1e-30 {
        let mut pairs = [
            (b[(0, 0)], Vec3::x()),
            (b[(1, 1)], Vec3::y()),
            (b[(2, 2)], Vec3::z()),
        ];
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        (
            [pairs[0].0, pairs[1].0, pairs[2].0],
            [pairs[0].1, pairs[1].1, pairs[2].1],
        )
    } else {
        let q = b.trace() / 3.0;
        let p2 = (b[(0, 0)] - q).powi(2) + (b[(1, 1)] - q).powi(2) + (b[(2, 2)] - q).powi(2) + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        let bb = (b - Matrix3::identity() * q) / p;
        let r = (bb.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let mid = 3.0 * q - hi - lo;

        let (v_lo, v_mid, v_hi);
        if mid - lo >= hi - mid {
            v_lo = null_vector(&(b - Matrix3::identity() * lo)).unwrap_or_else(Vec3::z);
            v_mid = complement_vector(&b, &v_lo, mid);
            v_hi = v_lo.cross(&v_mid);
        } else {
            v_hi = null_vector(&(b - Matrix3::identity() * hi)).unwrap_or_else(Vec3::x);
            v_mid = complement_vector(&b, &v_hi, mid);
            v_lo = v_mid.cross(&v_hi);
        }
        ([lo, mid, hi], [v_lo, v_mid, v_hi])
    };
    for v in vals.iter_mut() {
        *v *= scale;
    }
    SymEigen3 {
        values: vals,
        vectors: vecs.map(lexicographic_sign),
    }
}
