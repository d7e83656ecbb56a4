//! Statistical outlier removal and voxel downsampling of sphere points.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{PatternSource, SpherePattern};
use crate::geometry::{Point3, UnitVec3, Vec3};
use crate::spatial::NeighborIndex;

pub(crate) fn as_points(points: &[UnitVec3]) -> Vec<Point3> {
    points.iter().map(|p| Point3::from(p.into_inner())).collect()
}

/// Indices (ascending) of the points kept by one one-sided SOR pass.
///
/// A point survives iff the mean distance to its `k` nearest other points is
/// at most `mean + alpha·std` of that statistic over the whole set. Inputs
/// with `len <= k` are returned whole.
pub fn sor_indices(points: &[UnitVec3], k: usize, alpha: f64) -> Vec<usize> {
    let n = points.len();
    if n <= k || k == 0 {
        return (0..n).collect();
    }
    let coords = as_points(points);
    let index = NeighborIndex::new(&coords);
    let mean_dist: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nbrs = index.knn(&coords[i], k + 1).expect("non-empty index");
            let mut sum = 0.0;
            let mut taken = 0;
            for nb in &nbrs {
                if nb.index == i || taken == k {
                    continue;
                }
                sum += nb.distance;
                taken += 1;
            }
            sum / taken as f64
        })
        .collect();
    let mu = mean_dist.iter().sum::<f64>() / n as f64;
    let var = mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n as f64;
    let threshold = mu + alpha * var.sqrt();
    (0..n).filter(|&i| mean_dist[i] <= threshold).collect()
}

pub fn statistical_outlier_removal(points: &[UnitVec3], k: usize, alpha: f64) -> Vec<UnitVec3> {
    sor_indices(points, k, alpha).into_iter().map(|i| points[i]).collect()
}

/// Applies SOR passes in order, keeping the last result that still has at
/// least `min_retain` points.
pub fn iterative_sor(points: &[UnitVec3], schedule: &[(usize, f64)], min_retain: usize) -> SpherePattern {
    let mut current: Vec<UnitVec3> = points.to_vec();
    for &(k, alpha) in schedule {
        let next = statistical_outlier_removal(&current, k, alpha);
        if next.len() < min_retain {
            break;
        }
        current = next;
    }
    SpherePattern::uniform(current, PatternSource::SorRetained)
}

/// Replaces the points in each cubic voxel of edge `size` by their
/// centroid, projected back onto the sphere. Voxels are centred on the grid
/// points `size·(i, j, k)`, so the coordinate axes fall mid-cell. Output
/// order follows voxel keys.
pub fn voxel_downsample(points: &[UnitVec3], size: f64) -> Vec<UnitVec3> {
    voxel_aggregate(points.iter().map(|p| (p.into_inner(), 1.0)), size)
        .into_iter()
        .map(|(p, _)| p)
        .collect()
}

/// Weighted form of [`voxel_downsample`]: each output point carries the
/// summed weight of its voxel.
pub fn voxel_aggregate(points: impl IntoIterator<Item = (Vec3, f64)>, size: f64) -> Vec<(UnitVec3, f64)> {
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, f64)> = BTreeMap::new();
    for (p, w) in points {
        let key = (
            (p.x / size).round() as i64,
            (p.y / size).round() as i64,
            (p.z / size).round() as i64,
        );
        let e = cells.entry(key).or_insert((Vec3::zeros(), 0.0));
        e.0 += p * w;
        e.1 += w;
    }
    cells
        .into_values()
        .filter(|(sum, _)| sum.norm() > 1e-12)
        .map(|(sum, w)| (UnitVec3::new_normalize(sum), w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::sphere::angle_between;
        use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, UnitSphere};

    /// 200 points uniform in a 5° cap around +z, then 20 uniform on the sphere.
    fn cap_with_noise(seed: u64) -> (Vec<UnitVec3>, UnitVec3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = UnitVec3::new_normalize(Vec3::z());
        let cap = 5f64.to_radians();
        let mut pts = Vec::new();
        while pts.len() < 200 {
            let cos = 1.0 - rng.gen::<f64>() * (1.0 - cap.cos());
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let s = (1.0 - cos * cos).sqrt();
            pts.push(UnitVec3::new_normalize(Vec3::new(s * phi.cos(), s * phi.sin(), cos)));
        }
        for _ in 0..20 {
            let v: [f64; 3] = UnitSphere.sample(&mut rng);
            pts.push(UnitVec3::new_normalize(Vec3::from(v)));
        }
        (pts, axis)
    }

    #[test]
    fn cap_survives_uniform_noise_removed() {
        let (pts, axis) = cap_with_noise(1);
        let cap = 5f64.to_radians() + 1e-12;
        let in_cap = |p: &UnitVec3| angle_between(p, &axis) <= cap;
        let kept = sor_indices(&pts, 10, 1.0);
        for i in 0..200 {
            assert!(kept.contains(&i), "cap point {i} removed");
        }
        let noise_kept = kept.iter().filter(|&&i| i >= 200 && !in_cap(&pts[i])).count();
        let noise_total = (200..220).filter(|&i| !in_cap(&pts[i])).count();
        assert!(noise_kept * 10 <= noise_total, "{noise_kept} of {noise_total} noise points kept");
    }

    #[test]
    fn identical_points_all_kept() {
        let pts = vec![UnitVec3::new_normalize(Vec3::new(1.0, 1.0, 0.0)); 30];
        assert_eq!(sor_indices(&pts, 5, 1.0).len(), 30);
    }

    #[test]
    fn single_cluster_kept() {
        // Points evenly spaced on a 3° circle are interchangeable, so none is an outlier.
        let (e1, e2) = crate::rotation::sphere::tangent_basis(&UnitVec3::new_normalize(Vec3::y()));
        let r = 3f64.to_radians();
        let pts: Vec<UnitVec3> = (0..60)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 60.0;
                UnitVec3::new_normalize(Vec3::y() * r.cos() + (e1 * a.cos() + e2 * a.sin()) * r.sin())
            })
            .collect();
        assert_eq!(sor_indices(&pts, 10, 1.0).len(), 60);
    }

    #[test]
    fn small_input_unchanged() {
        let pts = vec![UnitVec3::new_normalize(Vec3::x()), UnitVec3::new_normalize(Vec3::y())];
        assert_eq!(statistical_outlier_removal(&pts, 5, 1.0), pts);
    }

    #[test]
    fn permissive_pass_is_identity() {
        let (pts, _) = cap_with_noise(3);
        let pattern = iterative_sor(&pts, &[(10, 10.0)], 1);
        assert_eq!(pattern.points, pts);
        assert_eq!(pattern.source, PatternSource::SorRetained);
    }

    #[test]
    fn iterative_passes_shrink_monotonically() {
        let (pts, _) = cap_with_noise(4);
        let schedule = [(10, 1.0), (8, 1.0), (5, 0.8)];
        let mut prev = pts.clone();
        for i in 1..=schedule.len() {
            let step = iterative_sor(&pts, &schedule[..i], 1).points;
            assert!(step.iter().all(|p| prev.contains(p)));
            prev = step;
        }
    }

    #[test]
    fn min_retain_respected() {
        let (pts, _) = cap_with_noise(5);
        let pattern = iterative_sor(&pts, &[(10, 0.2), (10, 0.2), (10, 0.2), (10, 0.2)], 50);
        assert!(pattern.points.len() >= 50);
    }

    #[test]
    fn voxel_centroids() {
        let a = UnitVec3::new_normalize(Vec3::new(1.0, 0.001, 0.0));
        let b = UnitVec3::new_normalize(Vec3::new(1.0, 0.002, 0.0));
        let c = UnitVec3::new_normalize(Vec3::new(0.0, 0.0, 1.0));
        let out = voxel_downsample(&[a, b, c], 0.05);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        let agg = voxel_aggregate([(a.into_inner(), 2.0), (b.into_inner(), 1.0)], 0.05);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].1, 3.0);
        let expect = (a.into_inner() * 2.0 + b.into_inner()).normalize();
        assert!((agg[0].0.into_inner() - expect).norm() < 1e-12);
    }
}
