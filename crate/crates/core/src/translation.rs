//! Translation between two scans whose relative rotation is already known.
//!
//! Each scan is cut into polar bins; inside a bin, short segments join points
//! of neighbouring rings. The segments of the previous scan are slid over
//! those of the (unrotated) current scan using closest points between
//! matched segments, with each step solved along the local surface normals
//! of the target segments.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nalgebra::Matrix3;

use crate::eigen::sym_eigen3;
use crate::error::{Error, Result};
use crate::geometry::{Point3, Rotation3, Vec3};
use crate::ingest::Scan;
use crate::spatial::NeighborIndex;

/// Planar range and azimuth in degrees, `[0, 360)`. Height is ignored.
pub fn to_polar(p: &Point3) -> Result<(f64, f64)> {
    if p.x == 0.0 && p.y == 0.0 {
        return Err(Error::DegeneratePolarPoint);
    }
    let r = p.x.hypot(p.y);
    let mut theta = p.y.atan2(p.x).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    // -0.0 and tiny negatives round up to exactly 360.
    if theta >= 360.0 {
        theta -= 360.0;
    }
    Ok((r, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolarCell {
    pub ring: usize,
    pub bin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment3 {
    pub p0: Point3,
    pub p1: Point3,
    /// `p1 - p0`.
    pub u: Vec3,
    pub cell: PolarCell,
}

impl LineSegment3 {
    /// `None` for coincident endpoints.
    pub fn new(p0: Point3, p1: Point3, cell: PolarCell) -> Option<Self> {
        let u = p1 - p0;
        (u.norm_squared() > 0.0).then_some(LineSegment3 { p0, p1, u, cell })
    }

    pub fn midpoint(&self) -> Point3 {
        Point3::from((self.p0.coords + self.p1.coords) * 0.5)
    }

    pub fn length(&self) -> f64 {
        self.u.norm()
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        LineSegment3 {
            p0: self.p0 + t,
            p1: self.p1 + t,
            ..*self
        }
    }

    pub fn rotated(&self, r: &Rotation3) -> Self {
        LineSegment3 {
            p0: r * self.p0,
            p1: r * self.p1,
            u: r * self.u,
            cell: self.cell,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LineCloud {
    pub segments: Vec<LineSegment3>,
    pub centers: Vec<Point3>,
}

impl LineCloud {
    pub fn new(segments: Vec<LineSegment3>) -> Self {
        let centers = segments.iter().map(LineSegment3::midpoint).collect();
        LineCloud { segments, centers }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn rotated(&self, r: &Rotation3) -> LineCloud {
        LineCloud::new(self.segments.iter().map(|s| s.rotated(r)).collect())
    }

    pub fn translated(&self, t: &Vec3) -> LineCloud {
        LineCloud::new(self.segments.iter().map(|s| s.translated(t)).collect())
    }
}

/// Builds the line cloud of a scan.
///
/// Points fall into cells `(ring, bin)` with `bin = ⌊θ / (360/bins)⌋`. Cell
/// `(r, b)` proposes lines from its points to those of `(r + 1, b)`: every
/// pair when there are at most `lines_per_cell`, otherwise `lines_per_cell`
/// distinct pairs drawn with a generator seeded from `rng_seed` and the cell.
/// The shortest `⌈keep_fraction · count⌉` candidates are kept.
pub fn generate_line_cloud(scan: &Scan, bins: usize, lines_per_cell: usize, keep_fraction: f64, rng_seed: u64) -> Result<LineCloud> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument("keep_fraction must be in (0, 1]".into()));
    }
    let width = 360.0 / bins as f64;
    let mut cells: BTreeMap<PolarCell, Vec<usize>> = BTreeMap::new();
    for (i, p) in scan.points.iter().enumerate() {
        let Ok((_, theta)) = to_polar(p) else { continue };
        let bin = ((theta / width) as usize).min(bins - 1);
        cells.entry(PolarCell { ring: scan.rings[i], bin }).or_default().push(i);
    }
    let jobs: Vec<(PolarCell, &Vec<usize>, &Vec<usize>)> = cells
        .iter()
        .filter_map(|(cell, lower)| {
            let upper = cells.get(&PolarCell {
                ring: cell.ring + 1,
                bin: cell.bin,
            })?;
            Some((*cell, lower, upper))
        })
        .collect();
    let per_cell: Vec<Vec<LineSegment3>> = jobs
        .par_iter()
        .map(|(cell, lower, upper)| {
            let total = lower.len() * upper.len();
            let picks: Vec<usize> = if total <= lines_per_cell {
                (0..total).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream((cell.bin * scan.ring_count.max(cell.ring + 1) + cell.ring) as u64);
                sample(&mut rng, total, lines_per_cell).into_vec()
            };
            let mut candidates: Vec<LineSegment3> = picks
                .into_iter()
                .filter_map(|k| {
                    let (a, b) = (lower[k / upper.len()], upper[k % upper.len()]);
                    LineSegment3::new(scan.points[a], scan.points[b], *cell)
                })
                .collect();
            candidates.sort_by(|x, y| x.u.norm_squared().total_cmp(&y.u.norm_squared()));
            let keep = (keep_fraction * candidates.len() as f64).ceil() as usize;
            candidates.truncate(keep);
            candidates
        })
        .collect();
    Ok(LineCloud::new(per_cell.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoints {
    pub xs: Point3,
    pub xt: Point3,
    /// The lines were (numerically) parallel; `xs` is then `ls.p0`.
    pub parallel: bool,
}

/// Closest points of the infinite lines through `ls` and `lt`.
pub fn closest_points_between_lines(ls: &LineSegment3, lt: &LineSegment3) -> ClosestPoints {
    let (us, ut) = (&ls.u, &lt.u);
    let w = ls.p0 - lt.p0;
    let a = us.dot(us);
    let b = us.dot(ut);
    let c = ut.dot(ut);
    let d = us.dot(&w);
    let e = ut.dot(&w);
    let den = a * c - b * b;
    if den < 1e-12 * a * c {
        return ClosestPoints {
            xs: ls.p0,
            xt: lt.p0 + ut * (e / c),
            parallel: true,
        };
    }
    let tsc = (b * e - c * d) / den;
    let ttc = (a * e - b * d) / den;
    ClosestPoints {
        xs: ls.p0 + us * tsc,
        xt: lt.p0 + ut * ttc,
        parallel: false,
    }
}

/// Closest points of the two segments, parameters clamped to `[0, 1]`.
///
/// Nearly parallel lines put the closest points of their infinite
/// extensions far outside both segments, where a small direction error
/// becomes a large offset.
pub fn closest_points_between_segments(ls: &LineSegment3, lt: &LineSegment3) -> ClosestPoints {
    let w = ls.p0 - lt.p0;
    let a = ls.u.dot(&ls.u);
    let b = ls.u.dot(&lt.u);
    let c = lt.u.dot(&lt.u);
    let d = ls.u.dot(&w);
    let e = lt.u.dot(&w);
    let den = a * c - b * b;
    let parallel = den < 1e-12 * a * c;
    let mut s = if parallel { 0.5 } else { ((b * e - c * d) / den).clamp(0.0, 1.0) };
    let mut t = (b * s + e) / c;
    if t < 0.0 {
        t = 0.0;
        s = (-d / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - d) / a).clamp(0.0, 1.0);
    }
    ClosestPoints {
        xs: ls.p0 + ls.u * s,
        xt: lt.p0 + lt.u * t,
        parallel,
    }
}

/// Surface normal at each segment: least-variance direction of the
/// endpoints of its `k` nearest segments (by center).
///
/// `None` when those endpoints are close to collinear (middle eigenvalue
/// below `min_planarity` times the largest), since the least-variance
/// direction is then arbitrary about the common line.
pub fn segment_normals(cloud: &LineCloud, index: &NeighborIndex, k: usize, min_planarity: f64) -> Vec<Option<Vec3>> {
    cloud
        .centers
        .par_iter()
        .map(|c| {
            let near = index.knn(c, k).expect("index is non-empty");
            let ends = || near.iter().flat_map(|nb| [cloud.segments[nb.index].p0.coords, cloud.segments[nb.index].p1.coords]);
            let mean = ends().fold(Vec3::zeros(), |s, p| s + p) / (2 * near.len()) as f64;
            let cov = ends().fold(Matrix3::zeros(), |m, p| m + (p - mean) * (p - mean).transpose());
            let e = sym_eigen3(&cov);
            (e.values[1] >= min_planarity * e.values[2]).then_some(e.vectors[0])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Mean of `X_t − X_s` over the surviving pairs.
    Centroid,
    /// Least squares for `step` in `n_j · step = n_j · (X_t − X_s)`, with
    /// `n_j` the surface normal at target segment `j`. Pairs on a surface
    /// constrain only its normal direction, so ground pairs no longer hold
    /// back horizontal motion.
    SurfaceNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineRegistrationOptions {
    pub max_iter: usize,
    /// Stop once a step is shorter than this, meters.
    pub tol: f64,
    pub step: StepRule,
    /// Closest points of the segments rather than of their infinite lines.
    pub clamp_to_segments: bool,
    /// Iterate without the mean-distance gate until converged, then with it.
    /// The gate alone rejects every pair on a wall whenever the offset is
    /// larger than the typical spacing of ground segments.
    pub ungated_warmup: bool,
    /// Neighbours for [`segment_normals`].
    pub normal_k: usize,
    /// Planarity threshold for [`segment_normals`]; pairs whose target has
    /// no normal are left out of the step.
    pub min_planarity: f64,
    /// Pairs whose source segment leaves the target surface at more than
    /// this sine (`|û_s · n|`) are left out. Catches ground seen in one scan
    /// and occluded by a pole or wall in the other.
    pub max_incidence: f64,
    /// Once gated, pairs whose closest points are further apart than this
    /// multiple of the longer segment are left out: parts of the scene seen
    /// by only one scan pair up with whatever lies nearest.
    pub max_gap_ratio: f64,
}

impl LineRegistrationOptions {
    /// Mean step over closest points of infinite lines, always gated.
    pub fn plain(max_iter: usize, tol: f64) -> Self {
        LineRegistrationOptions {
            max_iter,
            tol,
            step: StepRule::Centroid,
            clamp_to_segments: false,
            ungated_warmup: false,
            normal_k: 6,
            min_planarity: 0.05,
            max_incidence: 0.5,
            max_gap_ratio: f64::INFINITY,
        }
    }

    pub fn refined(max_iter: usize, tol: f64) -> Self {
        LineRegistrationOptions {
            max_iter,
            tol,
            step: StepRule::SurfaceNormal,
            clamp_to_segments: true,
            ungated_warmup: true,
            normal_k: 6,
            min_planarity: 0.05,
            max_incidence: 0.5,
            max_gap_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineRegistration {
    /// Shift taking the source lines onto the target lines.
    pub translation: Vec3,
    pub iterations: usize,
    /// Pairs used in the last iteration.
    pub pairs: usize,
}

/// Translation `t` with `source + t ≈ target`, using
/// [`LineRegistrationOptions::refined`].
pub fn register_line_clouds(source: &LineCloud, target: &LineCloud, max_iter: usize, tol: f64) -> Result<LineRegistration> {
    register_line_clouds_with(source, target, &LineRegistrationOptions::refined(max_iter, tol))
}

/// Translation `t` with `source + t ≈ target`.
///
/// Each iteration pairs every shifted source segment with the target segment
/// of nearest center, drops pairs whose center distance is above the mean
/// (once the gate is active), and moves by the step of `opts.step`.
pub fn register_line_clouds_with(source: &LineCloud, target: &LineCloud, opts: &LineRegistrationOptions) -> Result<LineRegistration> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyLineCloud);
    }
    let index = NeighborIndex::new(&target.centers);
    let normals = match opts.step {
        StepRule::SurfaceNormal => segment_normals(target, &index, opts.normal_k.max(1), opts.min_planarity),
        StepRule::Centroid => Vec::new(),
    };
    let mut gated = !opts.ungated_warmup;
    let mut t = Vec3::zeros();
    let mut iterations = 0;
    let mut pairs = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let matches: Vec<(usize, f64)> = source
            .centers
            .par_iter()
            .map(|c| {
                let nb = index.nearest(&(c + t)).expect("target index is non-empty");
                (nb.index, nb.distance)
            })
            .collect();
        let mean = matches.iter().map(|m| m.1).sum::<f64>() / matches.len() as f64;
        let diffs: Vec<Option<(usize, usize, Vec3)>> = matches
            .par_iter()
            .enumerate()
            .map(|(i, &(j, dist))| {
                if gated && dist > mean {
                    return None;
                }
                let s = source.segments[i].translated(&t);
                let tj = &target.segments[j];
                let cp = if opts.clamp_to_segments {
                    closest_points_between_segments(&s, tj)
                } else {
                    closest_points_between_lines(&s, tj)
                };
                let d = cp.xt - cp.xs;
                (!gated || d.norm() <= opts.max_gap_ratio * s.length().max(tj.length())).then_some((i, j, d))
            })
            .collect();
        let kept: Vec<(usize, usize, Vec3)> = diffs.into_iter().flatten().collect();
        if kept.is_empty() {
            return Err(Error::NoLineCorrespondences);
        }
        pairs = kept.len();
        let step = match opts.step {
            StepRule::Centroid => kept.iter().fold(Vec3::zeros(), |s, (_, _, d)| s + d) / kept.len() as f64,
            StepRule::SurfaceNormal => {
                let (a, b) = kept.iter().fold((Matrix3::zeros(), Vec3::zeros()), |(a, b), (i, j, d)| match normals[*j] {
                    Some(n) if source.segments[*i].u.dot(&n).abs() <= opts.max_incidence * source.segments[*i].length() => {
                        (a + n * n.transpose(), b + n * n.dot(d))
                    }
                    _ => (a, b),
                });
                solve_observable(&a, &b)
            }
        };
        t += step;
        if step.norm() < opts.tol {
            if gated {
                break;
            }
            gated = true;
        }
    }
    Ok(LineRegistration {
        translation: t,
        iterations,
        pairs,
    })
}

/// Solves `a x = b` on the eigenvectors of `a` that carry information; the
/// other directions (say, horizontal motion over bare ground) get no step.
fn solve_observable(a: &Matrix3<f64>, b: &Vec3) -> Vec3 {
    let e = sym_eigen3(a);
    let top = e.values[2];
    (0..3)
        .filter(|&k| e.values[k] > 1e-6 * top)
        .fold(Vec3::zeros(), |x, k| x + e.vectors[k] * (e.vectors[k].dot(b) / e.values[k]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationConfig {
    pub bins: usize,
    pub lines_per_cell: usize,
    pub keep_fraction: f64,
    pub max_iter: usize,
    /// Stop once a step is shorter than this, meters.
    pub tol: f64,
    pub rng_seed: u64,
    /// Use [`LineRegistrationOptions::plain`] instead of `refined`.
    pub plain_registration: bool,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        TranslationConfig {
            bins: 360,
            lines_per_cell: 8,
            keep_fraction: 0.4,
            max_iter: 100,
            tol: 1e-5,
            rng_seed: 0,
            plain_registration: false,
        }
    }
}

impl TranslationConfig {
    pub fn line_cloud(&self, scan: &Scan) -> Result<LineCloud> {
        generate_line_cloud(scan, self.bins, self.lines_per_cell, self.keep_fraction, self.rng_seed)
    }

    pub fn registration_options(&self) -> LineRegistrationOptions {
        if self.plain_registration {
            LineRegistrationOptions::plain(self.max_iter, self.tol)
        } else {
            LineRegistrationOptions::refined(self.max_iter, self.tol)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationEstimate {
    /// `t` with `curr ≈ R · prev + t`.
    pub translation: Vec3,
    pub iterations: usize,
    pub pairs: usize,
}

/// Translation from line clouds already built in each scan's own frame.
///
/// The current cloud is unrotated by `R⁻¹`, after which the two differ by
/// `R⁻¹ t`; the result is mapped back to `t`.
pub fn translation_from_line_clouds(prev: &LineCloud, curr: &LineCloud, rotation: &Rotation3, cfg: &TranslationConfig) -> Result<TranslationEstimate> {
    let unrotated = curr.rotated(&rotation.inverse());
    let reg = register_line_clouds_with(prev, &unrotated, &cfg.registration_options())?;
    Ok(TranslationEstimate {
        translation: rotation * reg.translation,
        iterations: reg.iterations,
        pairs: reg.pairs,
    })
}

/// Translation `t` with `curr ≈ R · prev + t` for a known rotation `R`.
pub fn estimate_translation(prev: &Scan, curr: &Scan, rotation: &Rotation3, cfg: &TranslationConfig) -> Result<TranslationEstimate> {
    translation_from_line_clouds(&cfg.line_cloud(prev)?, &cfg.line_cloud(curr)?, rotation, cfg)
}
