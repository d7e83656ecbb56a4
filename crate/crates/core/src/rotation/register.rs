//! Iterative closest-point alignment of two sphere patterns, rotation only.

use nalgebra::Matrix3;

use super::sor::voxel_aggregate;
use super::SpherePattern;
use crate::error::{Error, Result};
use crate::geometry::{orthonormalize, rotation_angle, Point3, Rotation3, UnitVec3, Vec3};
use crate::spatial::NeighborIndex;

/// Second singular value of the cross-covariance, relative to the first,
/// below which it is treated as rank one.
pub const RANK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct PatternRegistration {
    /// Maps source-frame directions to target-frame directions.
    pub rotation: Rotation3,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted orthogonal Procrustes: the proper rotation `R` minimizing
/// `Σ wᵢ |R·sᵢ − tᵢ|²`, from the SVD of `H = Σ wᵢ sᵢ tᵢᵀ`.
pub fn procrustes_weighted(pairs: &[(Vec3, Vec3, f64)]) -> Result<Rotation3> {
    let mut h = Matrix3::zeros();
    for (s, t, w) in pairs {
        h += s * t.transpose() * *w;
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    if !(sv[order[0]] > 0.0) || sv[order[1]] <= RANK_TOLERANCE * sv[order[0]] {
        return Err(Error::DegeneratePattern);
    }
    let u = svd.u.unwrap();
    let v = svd.v_t.unwrap().transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Ok(Rotation3::from_matrix_unchecked(v * d * u.transpose()))
}

pub fn procrustes(pairs: &[(Vec3, Vec3)]) -> Result<Rotation3> {
    let weighted: Vec<(Vec3, Vec3, f64)> = pairs.iter().map(|(s, t)| (*s, *t, 1.0)).collect();
    procrustes_weighted(&weighted)
}

/// Aligns `source` onto `target` starting from `init`.
///
/// Every target point is paired with its nearest rotated source point, the
/// pair weighted by the smaller of the two point weights. The index is
/// built once over the source set and queried with the target point rotated
/// back into the source frame.
pub fn register_patterns(
    source: &SpherePattern,
    target: &SpherePattern,
    init: &Rotation3,
    max_iter: usize,
    tol: f64,
) -> Result<PatternRegistration> {
    let too_sparse = source.len().min(target.len());
    if too_sparse < 3 {
        return Err(Error::PatternTooSparse(too_sparse));
    }
    icp(source, target, init, max_iter, tol, f64::INFINITY)
}

/// The registration loop proper. Two weighted directions that are not
/// parallel already fix a rotation, so only the rank test guards it. Pairs
/// further apart than `gate` (chord) are left out of the solve.
fn icp(
    source: &SpherePattern,
    target: &SpherePattern,
    init: &Rotation3,
    max_iter: usize,
    tol: f64,
    gate: f64,
) -> Result<PatternRegistration> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::PatternTooSparse(0));
    }
    let src: Vec<Point3> = source.points.iter().map(|p| Point3::from(p.into_inner())).collect();
    let index = NeighborIndex::new(&src);
    let mut rotation = *init;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let inv = rotation.inverse();
        let pairs: Vec<(Vec3, Vec3, f64)> = target
            .points
            .iter()
            .zip(&target.weights)
            .filter_map(|(t, wt)| {
                let q = Point3::from(inv * t.into_inner());
                let nn = index.nearest(&q).expect("non-empty index");
                (nn.distance <= gate).then(|| (rotation * src[nn.index].coords, t.into_inner(), source.weights[nn.index].min(*wt)))
            })
            .collect();
        let step = procrustes_weighted(&pairs)?;
        rotation = orthonormalize((step * rotation).matrix());
        if rotation_angle(&step) < tol {
            converged = true;
            break;
        }
    }
    Ok(PatternRegistration {
        rotation,
        iterations,
        converged,
    })
}

/// Settings for [`cluster_pattern`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Edge of the fine voxels the pattern is first collapsed into (chord).
    pub cell: f64,
    /// Voxel centroids closer than this (chord) join the same cluster.
    pub link: f64,
    /// Clusters whose members all lie within this angle (radians) of their
    /// centroid are replaced by the centroid.
    pub compact: f64,
    /// Correspondences further apart than this angle (radians) are ignored.
    pub gate: f64,
    /// Compact clusters carrying less than this share of the pattern weight
    /// are set aside with the spread-out ones.
    pub min_share: f64,
}

/// Collapses each compact cluster of the pattern into one weighted centroid.
///
/// Points go into fine voxels first; voxel centroids are then joined by
/// single linkage. A cluster within `compact` of its centroid becomes that
/// centroid with the summed weight, anything more spread out (a cylinder's
/// band, say) keeps its voxel centroids. The partition depends only on
/// distances between pattern points, except at the fine-voxel scale.
pub fn cluster_pattern(pattern: &SpherePattern, params: &ClusterParams) -> Vec<(UnitVec3, f64)> {
    let (mut compact, loose) = split_clusters(pattern, params);
    compact.extend(loose);
    compact
}

/// Compact group centroids and, separately, the cells of groups that spread
/// wider than `params.compact` or fall below `params.min_share`.
pub fn split_clusters(pattern: &SpherePattern, params: &ClusterParams) -> (Vec<(UnitVec3, f64)>, Vec<(UnitVec3, f64)>) {
    let cells = voxel_aggregate(
        pattern.points.iter().zip(&pattern.weights).map(|(p, w)| (p.into_inner(), *w)),
        params.cell,
    );
    let pts: Vec<Point3> = cells.iter().map(|(p, _)| Point3::from(p.into_inner())).collect();
    let index = NeighborIndex::new(&pts);
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..cells.len() {
        for j in index.radius_query(&pts[i], params.link) {
            let (a, b) = (root(&mut parent, i), root(&mut parent, j));
            if a != b {
                // Smaller index becomes the root so components are labelled by their first cell.
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..cells.len() {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let mut out = Vec::new();
    let mut loose = Vec::new();
    for members in groups.values() {
        let (sum, weight) = members
            .iter()
            .fold((Vec3::zeros(), 0.0), |(s, w), &i| (s + cells[i].0.into_inner() * cells[i].1, w + cells[i].1));
        if sum.norm() < 1e-12 {
            continue;
        }
        let centroid = UnitVec3::new_normalize(sum);
        let spread = members
            .iter()
            .map(|&i| cells[i].0.dot(&centroid).clamp(-1.0, 1.0).acos())
            .fold(0.0, f64::max);
        if spread <= params.compact && weight >= params.min_share * total {
            out.push((centroid, weight));
        } else {
            loose.extend(members.iter().map(|&i| cells[i]));
        }
    }
    (out, loose)
}

/// As [`register_patterns`], but on the output of [`cluster_pattern`] for
/// both sides.
///
/// Dense, nearly coincident patterns give nearest-neighbour pairs that lie
/// almost on top of each other, and the plain loop then creeps towards the
/// optimum over hundreds of iterations. Cluster centroids pair up directly.
pub fn register_patterns_clustered(
    source: &SpherePattern,
    target: &SpherePattern,
    init: &Rotation3,
    max_iter: usize,
    tol: f64,
    params: &ClusterParams,
) -> Result<PatternRegistration> {
    // Elongated groups (arcs traced by curved surfaces) pair cell to cell
    // along the arc and drag the estimate back towards `init`; small groups
    // are mostly fragments that pair with the wrong partner. Both are only
    // used when the main centroids cannot fix a rotation.
    let (src, tgt) = (split_clusters(source, params), split_clusters(target, params));
    let as_pattern = |c: Vec<(UnitVec3, f64)>, kind| {
        let (points, weights): (Vec<UnitVec3>, Vec<f64>) = c.into_iter().unzip();
        SpherePattern { points, weights, source: kind }
    };
    let use_loose = as_pattern(src.0.clone(), source.source).is_degenerate() || as_pattern(tgt.0.clone(), target.source).is_degenerate();
    let collapse = |(mut compact, loose): (Vec<(UnitVec3, f64)>, Vec<(UnitVec3, f64)>), kind| {
        if use_loose {
            compact.extend(loose);
        }
        as_pattern(compact, kind)
    };
    let too_sparse = source.len().min(target.len());
    if too_sparse < 3 {
        return Err(Error::PatternTooSparse(too_sparse));
    }
    let gate = 2.0 * (params.gate / 2.0).sin();
    icp(&collapse(src, source.source), &collapse(tgt, target.source), init, max_iter, tol, gate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_rotation, rot_ypr_deg, rot_z_deg, rotation_distance};
    use crate::rotation::PatternSource;
    use crate::synth::sample_vmf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pattern(points: Vec<UnitVec3>) -> SpherePattern {
        SpherePattern::uniform(points, PatternSource::SorRetained)
    }

    fn rotate(p: &SpherePattern, r: &Rotation3) -> SpherePattern {
        pattern(p.points.iter().map(|x| UnitVec3::new_normalize(r * x.into_inner())).collect())
    }

    /// Three clusters of caps, like ground plus two walls.
    fn structured(rng: &mut ChaCha8Rng, n: usize, kappa: f64) -> SpherePattern {
        let centers = [Vec3::z(), -Vec3::x(), Vec3::new(0.3, -1.0, 0.0)];
        pattern(
            (0..n)
                .map(|i| sample_vmf(rng, &UnitVec3::new_normalize(centers[i % 3]), kappa))
                .collect(),
        )
    }

    #[test]
    fn identical_patterns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = structured(&mut rng, 200, 300.0);
        let r = register_patterns(&p, &p, &Rotation3::identity(), 30, 1e-10).unwrap();
        assert!(rotation_distance(&r.rotation, &Rotation3::identity()) < 1e-9);
    }

    #[test]
    fn recovers_yaw_on_cap_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = structured(&mut rng, 200, 300.0);
        let truth = rot_z_deg(5.0);
        let q = rotate(&p, &truth);
        let r = register_patterns(&p, &q, &Rotation3::identity(), 100, 1e-10).unwrap();
        assert!(rotation_distance(&r.rotation, &truth).to_degrees() < 0.05);
    }

    #[test]
    fn recovers_rotation_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = structured(&mut rng, 600, 2000.0);
        let truth = rot_ypr_deg(4.0, -3.0, 2.0);
        let q = pattern(
            p.points
                .iter()
                .map(|x| sample_vmf(&mut rng, &UnitVec3::new_normalize(truth * x.into_inner()), 500.0))
                .collect(),
        );
        let init = truth * rot_ypr_deg(rng.gen_range(-5.0..5.0), 5.0, -3.0);
        assert!(rotation_distance(&init, &truth).to_degrees() < 10.0);
        let r = register_patterns(&p, &q, &init, 200, 1e-10).unwrap();
        let err = rotation_distance(&r.rotation, &truth).to_degrees();
        assert!(err < 0.5, "error {err}°");
        assert!(is_rotation(r.rotation.matrix(), 1e-9));
    }

    #[test]
    fn sparse_and_degenerate() {
        let two = pattern(vec![UnitVec3::new_normalize(Vec3::x()), UnitVec3::new_normalize(Vec3::y())]);
        assert!(matches!(
            register_patterns(&two, &two, &Rotation3::identity(), 10, 1e-9),
            Err(Error::PatternTooSparse(2))
        ));
        let one_dir = pattern(vec![UnitVec3::new_normalize(Vec3::z()); 10]);
        assert!(matches!(
            register_patterns(&one_dir, &one_dir, &Rotation3::identity(), 10, 1e-9),
            Err(Error::DegeneratePattern)
        ));
    }

    #[test]
    fn reflection_candidate_is_corrected() {
        // Coplanar correspondences admit a reflection; the determinant guard removes it.
        let pairs: Vec<(Vec3, Vec3)> = [Vec3::x(), Vec3::y(), -Vec3::x(), Vec3::new(0.6, 0.8, 0.0)]
            .iter()
            .map(|v| (*v, Vec3::new(v.x, -v.y, 0.0)))
            .collect();
        let r = procrustes(&pairs).unwrap();
        assert!(is_rotation(r.matrix(), 1e-9));
    }

    fn params() -> ClusterParams {
        ClusterParams {
            cell: 0.005,
            link: 0.015,
            compact: 3f64.to_radians(),
            gate: 10f64.to_radians(),
            min_share: 0.01,
        }
    }

    #[test]
    fn clusters_collapse_to_weighted_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = structured(&mut rng, 3000, 20000.0);
        let (compact, loose) = split_clusters(&p, &params());
        assert_eq!(compact.len(), 3);
        assert!(loose.is_empty());
        // Oracle: plain mean direction of the points nearest each cap center.
        let centers = [Vec3::z(), -Vec3::x(), Vec3::new(0.3, -1.0, 0.0)];
        for c in centers {
            let c = UnitVec3::new_normalize(c);
            let members: Vec<&UnitVec3> = p.points.iter().filter(|x| x.dot(&c) > 0.9).collect();
            let mean = UnitVec3::new_normalize(members.iter().fold(Vec3::zeros(), |a, x| a + x.into_inner()));
            let (got, w) = compact.iter().min_by(|a, b| a.0.angle(&c).total_cmp(&b.0.angle(&c))).unwrap();
            assert_eq!(*w, members.len() as f64);
            assert!(got.angle(&mean) < 1e-9);
        }
    }

    #[test]
    fn arcs_and_fragments_are_loose() {
        let mut p = pattern(Vec::new());
        // A 40° arc on the equator, sampled every 0.1°.
        for i in 0..400 {
            let a = (i as f64 * 0.1).to_radians();
            p.points.push(UnitVec3::new_normalize(Vec3::new(a.cos(), a.sin(), 0.0)));
        }
        p.points.extend(vec![UnitVec3::new_normalize(Vec3::z()); 500]);
        p.points.push(UnitVec3::new_normalize(-Vec3::y()));
        p.weights = vec![1.0; p.points.len()];
        let (compact, loose) = split_clusters(&p, &params());
        assert_eq!(compact.len(), 1);
        assert!(compact[0].0.angle(&UnitVec3::new_normalize(Vec3::z())) < 1e-12);
        assert_eq!(loose.iter().map(|c| c.1).sum::<f64>(), 401.0);
        assert_eq!(cluster_pattern(&p, &params()).len(), 1 + loose.len());
    }

    #[test]
    fn clustered_registration_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = structured(&mut rng, 3000, 20000.0);
        let truth = rot_ypr_deg(3.0, 2.0, -1.0);
        let q = pattern(
            p.points
                .iter()
                .map(|x| sample_vmf(&mut rng, &UnitVec3::new_normalize(truth * x.into_inner()), 20000.0))
                .collect(),
        );
        let r = register_patterns_clustered(&p, &q, &Rotation3::identity(), 50, 1e-12, &params()).unwrap();
        let err = rotation_distance(&r.rotation, &truth).to_degrees();
        assert!(err < 0.02, "error {err}°");
        let exact = rotate(&p, &truth);
        let r = register_patterns_clustered(&p, &exact, &Rotation3::identity(), 50, 1e-12, &params()).unwrap();
        assert!(rotation_distance(&r.rotation, &truth) < 1e-9);
    }
}
