//! Surface normals from local PCA, bilateral smoothing, and the map onto S².

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::eigen::{lexicographic_sign, sym_eigen3};
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, UnitVec3, Vec3};
use crate::ingest::Scan;
use crate::spatial::NeighborIndex;

pub const DEFAULT_NORMAL_K: usize = 20;
pub const DEFAULT_SIGMA_SPATIAL: f64 = 0.5;
pub const DEFAULT_SIGMA_NORMAL_DEG: f64 = 15.0;

/// Bilateral neighborhoods are cut at this many spatial sigmas.
const BILATERAL_RADIUS_SIGMAS: f64 = 2.0;
/// Cap on the smoothing neighbourhood; near the sensor a 2σs ball holds
/// thousands of ground points.
pub const BILATERAL_MAX_NEIGHBORS: usize = 32;

/// Unit normals paired with the points they were estimated at.
#[derive(Debug, Clone, Default)]
pub struct NormalCloud {
    pub normals: Vec<UnitVec3>,
    pub source_points: Vec<Point3>,
    /// `λ₀ / (λ₀ + λ₁ + λ₂)` per point.
    pub curvature: Vec<f64>,
    /// `λ₁ / λ₂` per point: near zero when the neighborhood is a curve
    /// rather than a surface patch, which leaves the normal undetermined.
    pub planarity: Vec<f64>,
}

impl NormalCloud {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Rigidly moves points and normals.
    pub fn transformed(&self, t: &RigidTransform) -> NormalCloud {
        NormalCloud {
            normals: self
                .normals
                .iter()
                .map(|n| UnitVec3::new_normalize(t.rotation * n.into_inner()))
                .collect(),
            source_points: self.source_points.iter().map(|p| t.apply(p)).collect(),
            curvature: self.curvature.clone(),
            planarity: self.planarity.clone(),
        }
    }

    /// The entries with `planarity >= min_planarity`, in order.
    pub fn retain_planar(&self, min_planarity: f64) -> NormalCloud {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.planarity[i] >= min_planarity).collect();
        NormalCloud {
            normals: keep.iter().map(|&i| self.normals[i]).collect(),
            source_points: keep.iter().map(|&i| self.source_points[i]).collect(),
            curvature: keep.iter().map(|&i| self.curvature[i]).collect(),
            planarity: keep.iter().map(|&i| self.planarity[i]).collect(),
        }
    }
}

/// Per-point results of [`normal_from_covariance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalShape {
    pub normal: UnitVec3,
    pub curvature: f64,
    pub planarity: f64,
}

/// Mean and `1/k`-normalized scatter of a neighborhood.
pub fn neighborhood_covariance(points: &[Point3], ids: impl Iterator<Item = usize> + Clone) -> (Point3, Matrix3<f64>) {
    let mut sum = Vec3::zeros();
    let mut n = 0usize;
    for i in ids.clone() {
        sum += points[i].coords;
        n += 1;
    }
    let mean = sum / n as f64;
    let mut c = Matrix3::zeros();
    for i in ids {
        let d = points[i].coords - mean;
        c += d * d.transpose();
    }
    (Point3::from(mean), c / n as f64)
}

/// Normal from a covariance: the smallest-eigenvalue eigenvector, turned to
/// face `origin`. When the normal is perpendicular to the line of sight the
/// eigen-solver's lexicographic sign is kept.
pub fn normal_from_covariance(c: &Matrix3<f64>, at: &Point3, origin: &Point3) -> LocalShape {
    let e = sym_eigen3(c);
    let mut n = e.vectors[0];
    let view = origin - at;
    let facing = n.dot(&view);
    if facing.abs() > 1e-12 * view.norm() {
        if facing < 0.0 {
            n = -n;
        }
    } else {
        n = lexicographic_sign(n);
    }
    let [l0, l1, l2] = e.values.map(|v| v.max(0.0));
    let sum = l0 + l1 + l2;
    LocalShape {
        normal: UnitVec3::new_unchecked(n),
        curvature: if sum > 0.0 { (l0 / sum).min(1.0 / 3.0) } else { 0.0 },
        planarity: if l2 > 0.0 { (l1 / l2).min(1.0) } else { 0.0 },
    }
}

/// PCA normals over the `k` nearest neighbors (the point itself included),
/// oriented toward `origin`.
pub fn estimate_normals_from(points: &[Point3], index: &NeighborIndex, k: usize, origin: &Point3) -> Result<NormalCloud> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("normal k must be >= 3, got {k}")));
    }
    if points.len() < k {
        return Err(Error::InsufficientPoints {
            needed: k,
            got: points.len(),
        });
    }
    let results: Vec<LocalShape> = points
        .par_iter()
        .map(|p| {
            let nbrs = index.knn(p, k).expect("non-empty index");
            let (_, c) = neighborhood_covariance(points, nbrs.iter().map(|n| n.index));
            normal_from_covariance(&c, p, origin)
        })
        .collect();
    Ok(NormalCloud {
        normals: results.iter().map(|r| r.normal).collect(),
        source_points: points.to_vec(),
        curvature: results.iter().map(|r| r.curvature).collect(),
        planarity: results.iter().map(|r| r.planarity).collect(),
    })
}

/// Normals for a scan in its own sensor frame (sensor at the origin).
pub fn estimate_normals(scan: &Scan, k: usize) -> Result<NormalCloud> {
    let index = NeighborIndex::new(&scan.points);
    estimate_normals_from(&scan.points, &index, k, &Point3::origin())
}

/// Replaces each normal by the renormalized mean of its neighbors' normals,
/// weighted by `exp(-d²/2σs²)·exp(-θ²/2σn²)`. Neighbors are the nearest
/// [`BILATERAL_MAX_NEIGHBORS`] points within `2σs`. `index` must be built
/// over `nc.source_points`.
pub fn bilateral_filter_normals(nc: &NormalCloud, index: &NeighborIndex, sigma_s: f64, sigma_n: f64) -> Result<NormalCloud> {
    if !(sigma_s > 0.0 && sigma_n > 0.0) {
        return Err(Error::InvalidArgument("bilateral sigmas must be positive".into()));
    }
    let radius = BILATERAL_RADIUS_SIGMAS * sigma_s;
    let (inv_s, inv_n) = (0.5 / (sigma_s * sigma_s), 0.5 / (sigma_n * sigma_n));
    let normals: Vec<UnitVec3> = (0..nc.len())
        .into_par_iter()
        .map(|i| {
            let p = &nc.source_points[i];
            let n = nc.normals[i].into_inner();
            let mut acc = Vec3::zeros();
            let near = index.knn(p, BILATERAL_MAX_NEIGHBORS).unwrap_or_default();
            for j in near.into_iter().take_while(|nb| nb.distance <= radius).map(|nb| nb.index) {
                let d2 = (nc.source_points[j] - p).norm_squared();
                let nj = nc.normals[j].into_inner();
                let theta = n.dot(&nj).clamp(-1.0, 1.0).acos();
                acc += nj * ((-d2 * inv_s).exp() * (-theta * theta * inv_n).exp());
            }
            let len = acc.norm();
            if len > 1e-12 {
                UnitVec3::new_unchecked(acc / len)
            } else {
                nc.normals[i]
            }
        })
        .collect();
    Ok(NormalCloud {
        normals,
        source_points: nc.source_points.clone(),
        curvature: nc.curvature.clone(),
        planarity: nc.planarity.clone(),
    })
}

/// The normal directions as points on the unit sphere.
pub fn to_sphere(nc: &NormalCloud) -> Vec<UnitVec3> {
    nc.normals.clone()
}

/// Estimation followed by bilateral smoothing, sharing one spatial index.
pub fn smoothed_normals(scan: &Scan, k: usize, sigma_s: f64, sigma_n: f64) -> Result<NormalCloud> {
    let index = NeighborIndex::new(&scan.points);
    let raw = estimate_normals_from(&scan.points, &index, k, &Point3::origin())?;
    bilateral_filter_normals(&raw, &index, sigma_s, sigma_n)
}

/// As [`smoothed_normals`], but normals with `planarity < min_planarity`
/// are dropped before smoothing, so they neither appear in the output nor
/// pull on their neighbors.
pub fn planar_smoothed_normals(scan: &Scan, k: usize, min_planarity: f64, sigma_s: f64, sigma_n: f64) -> Result<NormalCloud> {
    let index = NeighborIndex::new(&scan.points);
    let raw = estimate_normals_from(&scan.points, &index, k, &Point3::origin())?.retain_planar(min_planarity);
    let kept_index = NeighborIndex::new(&raw.source_points);
    bilateral_filter_normals(&raw, &kept_index, sigma_s, sigma_n)
}
