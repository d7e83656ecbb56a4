//! Mode seeking for directional data.
//!
//! Each seed looks at the normals inside a forward cone around it, maps them
//! into its tangent plane with the logarithmic map, takes the Gaussian-weighted
//! mean there and walks back to the sphere with the exponential map.

use rayon::prelude::*;

use super::sor::as_points;
use super::sphere::{angle_between, exp_in_basis, fibonacci_sphere, log_in_basis, tangent_basis, Tangent2};
use crate::geometry::{Point3, UnitVec3};
use crate::spatial::NeighborIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSeed {
    pub center: UnitVec3,
    /// Normals inside the conical window at `center`.
    pub support: usize,
}

/// Normals and a spatial index over them, shared by all seeds.
pub struct DirectionSet<'a> {
    normals: &'a [UnitVec3],
    index: NeighborIndex,
}

impl<'a> DirectionSet<'a> {
    pub fn new(normals: &'a [UnitVec3]) -> Self {
        DirectionSet {
            normals,
            index: NeighborIndex::new(&as_points(normals)),
        }
    }

    /// Normals with `|n × f| < sin(θ/2)` and `n · f > 0`, ascending by index.
    pub fn window(&self, center: &UnitVec3, theta_window: f64) -> Vec<usize> {
        let half = theta_window / 2.0;
        let sin_half = half.sin();
        // Chord radius of the cone, padded so the exact test below decides.
        let chord = 2.0 * (half / 2.0).sin() * (1.0 + 1e-9) + 1e-12;
        self.index
            .radius_query(&Point3::from(center.into_inner()), chord)
            .into_iter()
            .filter(|&i| {
                let n = &self.normals[i];
                n.cross(center).norm() < sin_half && n.dot(center) > 0.0
            })
            .collect()
    }

    /// Density whose gradient the shift follows: the Gaussian profile
    /// truncated at the window edge, `Σ exp(-c·θ²) − e⁻¹`.
    pub fn density(&self, center: &UnitVec3, theta_window: f64) -> f64 {
        let c = kernel_width(theta_window);
        let edge = (-c * (theta_window / 2.0).powi(2)).exp();
        self.window(center, theta_window)
            .iter()
            .map(|&i| {
                let a = angle_between(center, &self.normals[i]);
                (-c * a * a).exp() - edge
            })
            .sum()
    }

    /// One mean-shift step; `None` when the window is empty.
    pub fn shift(&self, center: &UnitVec3, theta_window: f64) -> Option<(UnitVec3, Tangent2, usize)> {
        let ids = self.window(center, theta_window);
        if ids.is_empty() {
            return None;
        }
        let c = kernel_width(theta_window);
        let (e1, e2) = tangent_basis(center);
        let mut num = Tangent2::zeros();
        let mut den = 0.0;
        for &i in &ids {
            let m = log_in_basis(center, &e1, &e2, &self.normals[i]);
            let w = (-c * m.norm_squared()).exp();
            num += m * w;
            den += w;
        }
        let s = num / den;
        Some((exp_in_basis(center, &e1, &e2, &s), s, ids.len()))
    }

    /// Iterates [`Self::shift`] from `seed`; returns every visited center.
    pub fn climb(&self, seed: &UnitVec3, theta_window: f64, max_iter: usize, eps: f64) -> Option<(Vec<UnitVec3>, usize)> {
        let mut path = vec![*seed];
        let mut support = 0;
        for _ in 0..max_iter.max(1) {
            let (next, step, count) = self.shift(path.last().unwrap(), theta_window)?;
            path.push(next);
            support = count;
            if step.norm() < eps {
                break;
            }
        }
        // Support at the final center.
        let last = *path.last().unwrap();
        let final_support = self.window(&last, theta_window).len();
        Some((path, if final_support > 0 { final_support } else { support }))
    }
}

/// Kernel constant `c = (2/θ_window)²`: the weight is `e⁻¹` at half the window.
pub fn kernel_width(theta_window: f64) -> f64 {
    (2.0 / theta_window).powi(2)
}

/// Seeds a Fibonacci grid of `grid_n` directions, climbs each to a mode, and
/// merges modes closer than `θ_window/2` (larger support wins). Result is
/// sorted by descending support.
pub fn mean_shift_modes(normals: &[UnitVec3], theta_window: f64, grid_n: usize, max_iter: usize, eps: f64) -> Vec<ModeSeed> {
    if normals.is_empty() || grid_n == 0 {
        return Vec::new();
    }
    let set = DirectionSet::new(normals);
    let seeds = fibonacci_sphere(grid_n);
    let climbed: Vec<Option<ModeSeed>> = seeds
        .par_iter()
        .map(|s| {
            set.climb(s, theta_window, max_iter, eps)
                .map(|(path, support)| ModeSeed {
                    center: *path.last().unwrap(),
                    support,
                })
        })
        .collect();
    let mut modes: Vec<(usize, ModeSeed)> = climbed
        .into_iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|m| (i, m)))
        .filter(|(_, m)| m.support > 0)
        .collect();
    modes.sort_by(|a, b| b.1.support.cmp(&a.1.support).then(a.0.cmp(&b.0)));
    let mut kept: Vec<ModeSeed> = Vec::new();
    for (_, m) in modes {
        if kept
            .iter()
            .all(|k| angle_between(&k.center, &m.center) >= theta_window / 2.0)
        {
            kept.push(m);
        }
    }
    kept
}
