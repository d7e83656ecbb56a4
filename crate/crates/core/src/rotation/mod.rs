//! Rotation from the normal-density pattern on the unit sphere.
//!
//! Each frame's normals are thinned to their dense structure with iterated
//! statistical outlier removal. When that leaves too little (or only a single
//! direction, which typically means nothing but ground survived) the pattern
//! is rebuilt from mean-shift modes. The two patterns are then aligned with
//! an ICP-style loop whose inner step is an SVD Procrustes solve. Translation
//! never enters.

pub mod meanshift;
pub mod register;
pub mod sor;
pub mod sphere;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use nalgebra::Matrix3;

use crate::error::Error;
use crate::geometry::{Point3, Rotation3, UnitVec3};
use crate::normals::NormalCloud;
use crate::spatial::NeighborIndex;

pub use meanshift::{mean_shift_modes, ModeSeed};
pub use register::{cluster_pattern, split_clusters, register_patterns, register_patterns_clustered, ClusterParams, PatternRegistration};
pub use sor::{iterative_sor, statistical_outlier_removal, voxel_aggregate, voxel_downsample};
pub use sphere::{riemann_exp, riemann_log};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternSource {
    SorRetained,
    MeanShiftMode,
}

/// Fraction of pattern mass that must lie off the dominant direction (second
/// eigenvalue of the weighted scatter over the first) for the pattern to
/// count as spanning two directions.
pub const STRUCTURE_TOLERANCE: f64 = 2e-2;

/// Points retained on the sphere to represent one frame's structure.
///
/// `weights[i]` is the number of normals point `i` stands for: one for SOR
/// output, the voxel population after downsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePattern {
    pub points: Vec<UnitVec3>,
    pub weights: Vec<f64>,
    pub source: PatternSource,
}

impl SpherePattern {
    pub fn uniform(points: Vec<UnitVec3>, source: PatternSource) -> Self {
        SpherePattern {
            weights: vec![1.0; points.len()],
            points,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when the points span fewer than two directions, so no rotation
    /// about their common axis could be observed.
    pub fn is_degenerate(&self) -> bool {
        if self.points.is_empty() {
            return true;
        }
        let mut m = Matrix3::zeros();
        for (p, w) in self.points.iter().zip(&self.weights) {
            m += p.into_inner() * p.transpose() * *w;
        }
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev[1] < STRUCTURE_TOLERANCE * ev[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationConfig {
    pub sor_schedule: Vec<(usize, f64)>,
    pub sor_min_retain: usize,
    /// Apex angle of the mean-shift cone, radians.
    pub theta_window: f64,
    pub meanshift_grid: usize,
    pub meanshift_max_iter: usize,
    /// Mean-shift convergence threshold, radians.
    pub meanshift_eps: f64,
    /// Radius of the ball query around each mode, radians.
    pub ball_radius: f64,
    pub sparse_threshold: usize,
    /// Voxel edge on the sphere (chord length).
    pub voxel_size: f64,
    /// Cluster aggregation before registration; `None` registers raw points.
    pub cluster: Option<ClusterParams>,
    pub register_max_iter: usize,
    /// Registration stops once the incremental rotation is below this, radians.
    pub register_tol: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        RotationConfig {
            sor_schedule: vec![(50, 1.0), (30, 1.0), (20, 0.8)],
            sor_min_retain: 100,
            theta_window: 20f64.to_radians(),
            meanshift_grid: 256,
            meanshift_max_iter: 30,
            meanshift_eps: 1e-4f64.to_radians(),
            ball_radius: 10f64.to_radians(),
            sparse_threshold: 100,
            voxel_size: 0.005,
            cluster: Some(ClusterParams {
                cell: 0.005,
                link: 0.015,
                compact: 3f64.to_radians(),
                gate: 10f64.to_radians(),
                min_share: 0.01,
            }),
            register_max_iter: 100,
            register_tol: 1e-6f64.to_radians(),
        }
    }
}

/// Pattern rebuilt around mean-shift modes: ball query per mode, SOR on each
/// ball's points, then voxel-grid centroids weighted by voxel population.
///
/// SOR runs per ball because a single dominant cluster (usually the ground)
/// sets the global threshold and would erase every sparser cluster.
pub fn meanshift_pattern(normals: &[UnitVec3], cfg: &RotationConfig) -> SpherePattern {
    let modes = mean_shift_modes(
        normals,
        cfg.theta_window,
        cfg.meanshift_grid,
        cfg.meanshift_max_iter,
        cfg.meanshift_eps,
    );
    let points: Vec<Point3> = sor::as_points(normals);
    let index = NeighborIndex::new(&points);
    let chord = 2.0 * (cfg.ball_radius / 2.0).sin();
    let mut kept = BTreeSet::new();
    for m in &modes {
        let ball = index.radius_query(&Point3::from(m.center.into_inner()), chord);
        let near: Vec<UnitVec3> = ball.iter().map(|&i| normals[i]).collect();
        let mut current: Vec<usize> = (0..near.len()).collect();
        for &(k, alpha) in &cfg.sor_schedule {
            let subset: Vec<UnitVec3> = current.iter().map(|&i| near[i]).collect();
            let next: Vec<usize> = sor::sor_indices(&subset, k, alpha).into_iter().map(|j| current[j]).collect();
            if next.len() < cfg.sor_min_retain.min(current.len()) {
                break;
            }
            current = next;
        }
        kept.extend(current.into_iter().map(|i| ball[i]));
    }
    let (points, weights) = voxel_aggregate(kept.into_iter().map(|i| (normals[i].into_inner(), 1.0)), cfg.voxel_size)
        .into_iter()
        .unzip();
    SpherePattern {
        points,
        weights,
        source: PatternSource::MeanShiftMode,
    }
}

/// True when an SOR pattern is too small or has collapsed onto a single
/// direction, which typically means nothing but the ground survived.
pub fn needs_meanshift(sor: &SpherePattern, cfg: &RotationConfig) -> bool {
    sor.len() < cfg.sparse_threshold || sor.is_degenerate()
}

/// SOR pattern, or the mean-shift pattern when [`needs_meanshift`] holds.
pub fn extract_pattern(normals: &[UnitVec3], cfg: &RotationConfig) -> SpherePattern {
    let sor = iterative_sor(normals, &cfg.sor_schedule, cfg.sor_min_retain);
    if !needs_meanshift(&sor, cfg) {
        return sor;
    }
    meanshift_pattern(normals, cfg)
}

/// Patterns for a frame pair, built the same way for both frames: if either
/// frame needs the mean-shift pattern, both get one. Mixing the two kinds
/// pairs a SOR core against a fuller mode neighbourhood and the extra
/// structure on one side finds wrong partners.
pub fn extract_pattern_pair(prev: &[UnitVec3], curr: &[UnitVec3], cfg: &RotationConfig) -> (SpherePattern, SpherePattern) {
    let p = iterative_sor(prev, &cfg.sor_schedule, cfg.sor_min_retain);
    let c = iterative_sor(curr, &cfg.sor_schedule, cfg.sor_min_retain);
    if needs_meanshift(&p, cfg) || needs_meanshift(&c, cfg) {
        (meanshift_pattern(prev, cfg), meanshift_pattern(curr, cfg))
    } else {
        (p, c)
    }
}

#[derive(Debug, Clone)]
pub struct RotationEstimate {
    /// Maps previous-frame directions to current-frame directions.
    pub rotation: Rotation3,
    /// The prediction was returned because registration was impossible.
    pub fallback: bool,
    pub pattern_prev: usize,
    pub pattern_curr: usize,
    /// Either frame needed the mean-shift pattern.
    pub used_meanshift: bool,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Registers two already-extracted patterns, falling back to `predicted`.
pub fn rotation_from_patterns(
    prev: &SpherePattern,
    curr: &SpherePattern,
    predicted: &Rotation3,
    cfg: &RotationConfig,
) -> RotationEstimate {
    let used_meanshift = prev.source == PatternSource::MeanShiftMode || curr.source == PatternSource::MeanShiftMode;
    let result = if prev.is_degenerate() || curr.is_degenerate() {
        Err(Error::DegeneratePattern)
    } else {
        match &cfg.cluster {
            Some(params) => register_patterns_clustered(prev, curr, predicted, cfg.register_max_iter, cfg.register_tol, params),
            None => register_patterns(prev, curr, predicted, cfg.register_max_iter, cfg.register_tol),
        }
    };
    match result {
        Ok(reg) => RotationEstimate {
            rotation: reg.rotation,
            fallback: false,
            pattern_prev: prev.len(),
            pattern_curr: curr.len(),
            used_meanshift,
            iterations: reg.iterations,
            error: None,
        },
        Err(e) => RotationEstimate {
            rotation: *predicted,
            fallback: true,
            pattern_prev: prev.len(),
            pattern_curr: curr.len(),
            used_meanshift,
            iterations: 0,
            error: Some(e.to_string()),
        },
    }
}

/// One frame's patterns. The mean-shift pattern is built on first use and
/// kept, so a frame shared by several pairs pays for it once.
#[derive(Debug)]
pub struct FramePatterns {
    normals: Vec<UnitVec3>,
    pub sor: SpherePattern,
    meanshift: OnceLock<SpherePattern>,
}

impl FramePatterns {
    pub fn new(normals: Vec<UnitVec3>, cfg: &RotationConfig) -> Self {
        let sor = iterative_sor(&normals, &cfg.sor_schedule, cfg.sor_min_retain);
        FramePatterns {
            normals,
            sor,
            meanshift: OnceLock::new(),
        }
    }

    pub fn meanshift(&self, cfg: &RotationConfig) -> &SpherePattern {
        self.meanshift.get_or_init(|| meanshift_pattern(&self.normals, cfg))
    }

    pub fn needs_meanshift(&self, cfg: &RotationConfig) -> bool {
        needs_meanshift(&self.sor, cfg)
    }
}

/// Rotation `R` with `curr ≈ R · prev`, from the two frames' normals alone.
///
/// Both frames use SOR patterns unless either needs the mean-shift pattern
/// (see [`extract_pattern_pair`]). If the SOR patterns cannot be registered
/// (after gating only one direction may pair up), the mean-shift patterns
/// get a second try before the prediction is returned.
pub fn estimate_rotation_frames(prev: &FramePatterns, curr: &FramePatterns, predicted: &Rotation3, cfg: &RotationConfig) -> RotationEstimate {
    if prev.needs_meanshift(cfg) || curr.needs_meanshift(cfg) {
        return rotation_from_patterns(prev.meanshift(cfg), curr.meanshift(cfg), predicted, cfg);
    }
    let est = rotation_from_patterns(&prev.sor, &curr.sor, predicted, cfg);
    if !est.fallback {
        return est;
    }
    let retry = rotation_from_patterns(prev.meanshift(cfg), curr.meanshift(cfg), predicted, cfg);
    if retry.fallback {
        est
    } else {
        retry
    }
}

/// [`estimate_rotation_frames`] for two bare normal clouds.
pub fn estimate_rotation(prev: &NormalCloud, curr: &NormalCloud, predicted: &Rotation3, cfg: &RotationConfig) -> RotationEstimate {
    estimate_rotation_frames(
        &FramePatterns::new(prev.normals.clone(), cfg),
        &FramePatterns::new(curr.normals.clone(), cfg),
        predicted,
        cfg,
    )
}
