//! Frame-to-frame odometry, sequence assembly and trajectory evaluation.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, RigidTransform};
use crate::graphopt::{information, linear_predict, OptimizeReport, PoseGraph};
use crate::ingest::{list_scans, read_scan_binary, write_poses, write_scan_binary, Scan, Trajectory, DEFAULT_RING_COUNT};
use crate::normals::{planar_smoothed_normals, DEFAULT_NORMAL_K, DEFAULT_SIGMA_NORMAL_DEG, DEFAULT_SIGMA_SPATIAL};
use crate::rotation::{estimate_rotation_frames, ClusterParams, FramePatterns, RotationConfig};
use crate::synth::SyntheticScene;
use crate::translation::{translation_from_line_clouds, LineCloud, TranslationConfig};

/// Normals whose neighbourhood is more line than surface (`λ₁/λ₂` below
/// this) are left out of the rotation patterns.
pub const DEFAULT_MIN_PLANARITY: f64 = 0.05;

/// Every tunable of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub ring_count: usize,
    pub normal_k: usize,
    pub sigma_spatial: f64,
    pub sigma_normal_deg: f64,
    pub min_planarity: f64,
    pub rotation: RotationConfig,
    pub translation: TranslationConfig,
    /// Motions averaged for the prediction; 0 predicts identity.
    pub prediction_n: usize,
    pub optimize: bool,
    /// Register every frame against the one two frames back.
    pub skip_edges: bool,
    pub lm_max_iter: usize,
    pub lm_tol: f64,
    /// Scale of the rotation block of edge information matrices.
    pub info_rotation_weight: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            ring_count: DEFAULT_RING_COUNT,
            normal_k: DEFAULT_NORMAL_K,
            sigma_spatial: DEFAULT_SIGMA_SPATIAL,
            sigma_normal_deg: DEFAULT_SIGMA_NORMAL_DEG,
            min_planarity: DEFAULT_MIN_PLANARITY,
            rotation: RotationConfig::default(),
            translation: TranslationConfig::default(),
            prediction_n: 2,
            optimize: true,
            skip_edges: true,
            lm_max_iter: 50,
            lm_tol: 1e-6,
            info_rotation_weight: 200.0,
        }
    }
}

/// Keys accepted by [`Config::set`], in file order. Setting a `cluster_*`
/// key switches clustering on, so `cluster = false` has to come after them.
pub const CONFIG_KEYS: &[&str] = &[
    "ring_count",
    "normal_k",
    "sigma_spatial",
    "sigma_normal_deg",
    "min_planarity",
    "sor_schedule",
    "sor_min_retain",
    "theta_window_deg",
    "meanshift_grid",
    "meanshift_max_iter",
    "meanshift_eps_deg",
    "ball_radius_deg",
    "sparse_threshold",
    "voxel_size",
    "cluster_cell",
    "cluster_link",
    "cluster_compact_deg",
    "cluster_gate_deg",
    "cluster_min_share",
    "cluster",
    "register_max_iter",
    "register_tol_deg",
    "bins",
    "lines_per_cell",
    "keep_fraction",
    "translation_max_iter",
    "translation_tol",
    "line_registration",
    "rng_seed",
    "prediction_n",
    "optimize",
    "skip_edges",
    "lm_max_iter",
    "lm_tol",
    "info_rotation_weight",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

fn default_cluster() -> ClusterParams {
    RotationConfig::default().cluster.expect("clustering is on by default")
}

impl Config {
    /// Defaults overridden by `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    /// Applies `key=value`; the value is checked again by [`Config::validate`].
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let r = &mut self.rotation;
        let t = &mut self.translation;
        match key {
            "ring_count" => self.ring_count = parse_value(key, value)?,
            "normal_k" => self.normal_k = parse_value(key, value)?,
            "sigma_spatial" => self.sigma_spatial = parse_value(key, value)?,
            "sigma_normal_deg" => self.sigma_normal_deg = parse_value(key, value)?,
            "min_planarity" => self.min_planarity = parse_value(key, value)?,
            "sor_schedule" => r.sor_schedule = parse_schedule(value)?,
            "sor_min_retain" => r.sor_min_retain = parse_value(key, value)?,
            "theta_window_deg" => r.theta_window = parse_value::<f64>(key, value)?.to_radians(),
            "meanshift_grid" => r.meanshift_grid = parse_value(key, value)?,
            "meanshift_max_iter" => r.meanshift_max_iter = parse_value(key, value)?,
            "meanshift_eps_deg" => r.meanshift_eps = parse_value::<f64>(key, value)?.to_radians(),
            "ball_radius_deg" => r.ball_radius = parse_value::<f64>(key, value)?.to_radians(),
            "sparse_threshold" => r.sparse_threshold = parse_value(key, value)?,
            "voxel_size" => r.voxel_size = parse_value(key, value)?,
            "cluster" => {
                r.cluster = if parse_bool(key, value)? {
                    Some(r.cluster.unwrap_or_else(default_cluster))
                } else {
                    None
                }
            }
            "cluster_cell" => r.cluster.get_or_insert_with(default_cluster).cell = parse_value(key, value)?,
            "cluster_link" => r.cluster.get_or_insert_with(default_cluster).link = parse_value(key, value)?,
            "cluster_compact_deg" => r.cluster.get_or_insert_with(default_cluster).compact = parse_value::<f64>(key, value)?.to_radians(),
            "cluster_gate_deg" => r.cluster.get_or_insert_with(default_cluster).gate = parse_value::<f64>(key, value)?.to_radians(),
            "cluster_min_share" => r.cluster.get_or_insert_with(default_cluster).min_share = parse_value(key, value)?,
            "register_max_iter" => r.register_max_iter = parse_value(key, value)?,
            "register_tol_deg" => r.register_tol = parse_value::<f64>(key, value)?.to_radians(),
            "bins" => t.bins = parse_value(key, value)?,
            "lines_per_cell" => t.lines_per_cell = parse_value(key, value)?,
            "keep_fraction" => t.keep_fraction = parse_value(key, value)?,
            "translation_max_iter" => t.max_iter = parse_value(key, value)?,
            "translation_tol" => t.tol = parse_value(key, value)?,
            "line_registration" => {
                t.plain_registration = match value {
                    "refined" => false,
                    "plain" => true,
                    _ => return Err(Error::Config(format!("{key}: expected refined or plain, got `{value}`"))),
                }
            }
            "rng_seed" => t.rng_seed = parse_value(key, value)?,
            "prediction_n" => self.prediction_n = parse_value(key, value)?,
            "optimize" => self.optimize = parse_bool(key, value)?,
            "skip_edges" => self.skip_edges = parse_bool(key, value)?,
            "lm_max_iter" => self.lm_max_iter = parse_value(key, value)?,
            "lm_tol" => self.lm_tol = parse_value(key, value)?,
            "info_rotation_weight" => self.info_rotation_weight = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let t = &self.translation;
        let checks: [(bool, &str); 22] = [
            (self.ring_count >= 2, "ring_count must be at least 2"),
            (self.normal_k >= 3, "normal_k must be at least 3"),
            (self.sigma_spatial > 0.0, "sigma_spatial must be positive"),
            (self.sigma_normal_deg > 0.0, "sigma_normal_deg must be positive"),
            ((0.0..=1.0).contains(&self.min_planarity), "min_planarity must be in [0, 1]"),
            (!r.sor_schedule.is_empty(), "sor_schedule must have at least one step"),
            (r.sor_schedule.iter().all(|&(k, a)| k >= 1 && a > 0.0), "sor_schedule needs k >= 1 and alpha > 0"),
            (r.theta_window > 0.0 && r.theta_window < std::f64::consts::PI, "theta_window_deg must be in (0, 180)"),
            (r.meanshift_grid >= 1, "meanshift_grid must be at least 1"),
            (r.meanshift_eps > 0.0, "meanshift_eps_deg must be positive"),
            (r.ball_radius > 0.0 && r.ball_radius <= std::f64::consts::PI, "ball_radius_deg must be in (0, 180]"),
            (r.voxel_size > 0.0, "voxel_size must be positive"),
            (
                r.cluster.is_none_or(|c| c.cell > 0.0 && c.link > 0.0 && c.compact > 0.0 && c.gate > 0.0 && (0.0..1.0).contains(&c.min_share)),
                "cluster parameters must be positive, cluster_min_share in [0, 1)",
            ),
            (r.register_max_iter >= 1, "register_max_iter must be at least 1"),
            (r.register_tol > 0.0, "register_tol_deg must be positive"),
            (t.bins >= 1, "bins must be at least 1"),
            (t.lines_per_cell >= 1, "lines_per_cell must be at least 1"),
            (t.keep_fraction > 0.0 && t.keep_fraction <= 1.0, "keep_fraction must be in (0, 1]"),
            (t.max_iter >= 1, "translation_max_iter must be at least 1"),
            (t.tol > 0.0, "translation_tol must be positive"),
            (self.lm_tol >= 0.0, "lm_tol must be non-negative"),
            (self.info_rotation_weight > 0.0, "info_rotation_weight must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    /// The configuration as `key = value` lines that [`Config::parse`] reads back.
    pub fn to_text(&self) -> String {
        let r = &self.rotation;
        let t = &self.translation;
        let c = r.cluster.unwrap_or_else(default_cluster);
        let schedule: Vec<String> = r.sor_schedule.iter().map(|(k, a)| format!("{k}:{a}")).collect();
        let values: Vec<String> = vec![
            self.ring_count.to_string(),
            self.normal_k.to_string(),
            self.sigma_spatial.to_string(),
            self.sigma_normal_deg.to_string(),
            self.min_planarity.to_string(),
            schedule.join(","),
            r.sor_min_retain.to_string(),
            deg(r.theta_window),
            r.meanshift_grid.to_string(),
            r.meanshift_max_iter.to_string(),
            deg(r.meanshift_eps),
            deg(r.ball_radius),
            r.sparse_threshold.to_string(),
            r.voxel_size.to_string(),
            c.cell.to_string(),
            c.link.to_string(),
            deg(c.compact),
            deg(c.gate),
            c.min_share.to_string(),
            r.cluster.is_some().to_string(),
            r.register_max_iter.to_string(),
            deg(r.register_tol),
            t.bins.to_string(),
            t.lines_per_cell.to_string(),
            t.keep_fraction.to_string(),
            t.max_iter.to_string(),
            t.tol.to_string(),
            if t.plain_registration { "plain" } else { "refined" }.to_string(),
            t.rng_seed.to_string(),
            self.prediction_n.to_string(),
            self.optimize.to_string(),
            self.skip_edges.to_string(),
            self.lm_max_iter.to_string(),
            self.lm_tol.to_string(),
            self.info_rotation_weight.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Degrees for the config file, rounded so that defaults read back bit-exact.
fn deg(rad: f64) -> String {
    ((rad.to_degrees() * 1e9).round() / 1e9).to_string()
}

/// `k:alpha` steps separated by commas, e.g. `50:1.0, 30:1.0, 20:0.8`.
fn parse_schedule(value: &str) -> Result<Vec<(usize, f64)>> {
    value
        .split(',')
        .map(|step| {
            let (k, a) = step
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("sor_schedule: expected k:alpha, got `{}`", step.trim())))?;
            Ok((parse_value("sor_schedule", k.trim())?, parse_value("sor_schedule", a.trim())?))
        })
        .collect()
}

/// Everything the pipeline extracts from one scan, reused by every pair the
/// frame takes part in.
#[derive(Debug)]
pub struct FrameFeatures {
    pub frame: usize,
    pub patterns: FramePatterns,
    pub lines: LineCloud,
    /// Wall time to build, milliseconds.
    pub ms: f64,
}

impl FrameFeatures {
    pub fn new(scan: &Scan, cfg: &Config) -> Result<Self> {
        let start = Instant::now();
        // Too few points for a neighbourhood: no pattern, and rotation falls
        // back to the prediction.
        let normals = planar_smoothed_normals(
            scan,
            cfg.normal_k,
            cfg.min_planarity,
            cfg.sigma_spatial,
            cfg.sigma_normal_deg.to_radians(),
        )
        .map(|n| n.normals)
        .unwrap_or_default();
        let patterns = FramePatterns::new(normals, &cfg.rotation);
        let lines = cfg.translation.line_cloud(scan)?;
        Ok(FrameFeatures {
            frame: scan.frame_id,
            patterns,
            lines,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Outcome of registering one frame against the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    /// `A` with `curr ≈ A(prev)`, points in each scan's sensor frame.
    pub transform: RigidTransform,
    /// Rotation could not be registered; the whole transform is the prediction.
    pub fallback: bool,
    /// Translation registration failed; its part is the prediction.
    pub translation_fallback: bool,
    pub used_meanshift: bool,
    pub pattern_prev: usize,
    pub pattern_curr: usize,
    pub lines_prev: usize,
    pub lines_curr: usize,
    pub translation_iterations: usize,
    pub ms_features: f64,
    pub ms_rotation: f64,
    pub ms_translation: f64,
    pub ms_total: f64,
    pub error: Option<String>,
}

/// Registers two prepared frames. `history` holds earlier frame transforms,
/// oldest first, and seeds the rotation through [`linear_predict`].
pub fn process_features(prev: &FrameFeatures, curr: &FrameFeatures, history: &[RigidTransform], cfg: &Config) -> FrameResult {
    let predicted = linear_predict(history, cfg.prediction_n);
    let start = Instant::now();
    let rot = estimate_rotation_frames(&prev.patterns, &curr.patterns, &predicted.rotation, &cfg.rotation);
    let ms_rotation = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let mut result = FrameResult {
        frame: curr.frame,
        transform: predicted,
        fallback: rot.fallback,
        translation_fallback: false,
        used_meanshift: rot.used_meanshift,
        pattern_prev: rot.pattern_prev,
        pattern_curr: rot.pattern_curr,
        lines_prev: prev.lines.len(),
        lines_curr: curr.lines.len(),
        translation_iterations: 0,
        ms_features: 0.0,
        ms_rotation,
        ms_translation: 0.0,
        ms_total: 0.0,
        error: rot.error.clone(),
    };
    if !rot.fallback {
        match translation_from_line_clouds(&prev.lines, &curr.lines, &rot.rotation, &cfg.translation) {
            Ok(t) => {
                result.transform = RigidTransform::new(rot.rotation, t.translation);
                result.translation_iterations = t.iterations;
            }
            Err(e) => {
                result.transform = RigidTransform::new(rot.rotation, predicted.translation);
                result.translation_fallback = true;
                result.error = Some(e.to_string());
            }
        }
    }
    result.ms_translation = start.elapsed().as_secs_f64() * 1e3;
    result.ms_total = result.ms_rotation + result.ms_translation;
    result
}

/// Transform between two scans, normals to rotation to translation.
pub fn process_pair(prev: &Scan, curr: &Scan, history: &[RigidTransform], cfg: &Config) -> Result<FrameResult> {
    if prev.is_empty() || curr.is_empty() {
        return Err(Error::InvalidArgument("empty scan".into()));
    }
    let fp = FrameFeatures::new(prev, cfg)?;
    let fc = FrameFeatures::new(curr, cfg)?;
    let mut r = process_features(&fp, &fc, history, cfg);
    r.ms_features = fp.ms + fc.ms;
    r.ms_total += r.ms_features;
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    /// Sensor poses, frame 0 at the identity.
    pub trajectory: Trajectory,
    /// One entry per frame after the first.
    pub frames: Vec<FrameResult>,
    pub graph: PoseGraph,
    pub skip_edges: usize,
    pub optimization: Option<OptimizeReport>,
    /// The optimizer gave up; the trajectory is the unoptimized chain.
    pub optimization_error: Option<String>,
}

/// Runs the pipeline over scans in order.
///
/// Each frame is registered to the previous one (and, with skip edges on,
/// to the one before that). The graph is optimized once at the end.
pub fn run_scans<I>(scans: I, cfg: &Config) -> Result<SequenceResult>
where
    I: IntoIterator<Item = Result<Scan>>,
{
    let info = information(cfg.info_rotation_weight);
    let mut graph = PoseGraph::new(RigidTransform::identity());
    let mut window: VecDeque<FrameFeatures> = VecDeque::with_capacity(3);
    let mut history: Vec<RigidTransform> = Vec::new();
    let mut frames = Vec::new();
    let mut skip_edges = 0;
    for (i, scan) in scans.into_iter().enumerate() {
        let scan = scan.map_err(|e| Error::Frame {
            frame: i,
            source: Box::new(e),
        })?;
        let features = FrameFeatures::new(&scan, cfg).map_err(|e| Error::Frame {
            frame: i,
            source: Box::new(e),
        })?;
        if window.len() == 3 {
            window.pop_front();
        }
        window.push_back(features);
        if i == 0 {
            continue;
        }
        let n = window.len();
        let (prev, curr) = (&window[n - 2], &window[n - 1]);
        let mut r = process_features(prev, curr, &history, cfg);
        r.frame = i;
        r.ms_features = curr.ms + if i == 1 { prev.ms } else { 0.0 };
        r.ms_total += r.ms_features;
        graph.add_sequential_edge(i, r.transform.inverse(), info)?;
        if cfg.skip_edges && n == 3 {
            // Seeded with the two sequential estimates; kept only if the
            // rotation registered, as a stand-in for sufficient overlap.
            let seed = r.transform.compose(&history[history.len() - 1]);
            let s = process_features(&window[0], curr, &[seed], &Config { prediction_n: 1, ..cfg.clone() });
            if !s.fallback && !s.translation_fallback {
                graph.add_skip_edge(i - 2, i, s.transform.inverse(), info)?;
                skip_edges += 1;
            }
            r.ms_total += s.ms_total;
        }
        history.push(r.transform);
        frames.push(r);
    }
    if graph.len() < 2 {
        return Err(Error::InvalidArgument("need at least two scans".into()));
    }
    let (mut optimization, mut optimization_error) = (None, None);
    if cfg.optimize {
        let before = graph.nodes.clone();
        match graph.optimize(cfg.lm_max_iter, cfg.lm_tol) {
            Ok(rep) => optimization = Some(rep),
            Err(e) => {
                graph.nodes = before;
                optimization_error = Some(e.to_string());
            }
        }
    }
    Ok(SequenceResult {
        trajectory: Trajectory::new(graph.nodes.clone()),
        frames,
        graph,
        skip_edges,
        optimization,
        optimization_error,
    })
}

/// [`run_scans`] over the `*.bin` files of a directory, in name order.
pub fn run_sequence(dir: &Path, cfg: &Config) -> Result<SequenceResult> {
    let files = list_scans(dir)?;
    if files.len() < 2 {
        return Err(Error::InvalidArgument(format!("{}: need at least two scans, found {}", dir.display(), files.len())));
    }
    let ring_count = cfg.ring_count;
    run_scans(
        files
            .iter()
            .enumerate()
            .map(|(i, p)| read_scan_binary(p, ring_count, i).map(|d| d.scan)),
        cfg,
    )
}

pub const DIAGNOSTICS_HEADER: &str = "frame,rot_deg,trans_m,fallback,pattern_prev,pattern_curr,lines_prev,lines_curr,ms_total";

pub fn diagnostics_csv(frames: &[FrameResult]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.3}",
            f.frame,
            rotation_angle(&f.transform.rotation).to_degrees(),
            f.transform.translation.norm(),
            f.fallback as u8,
            f.pattern_prev,
            f.pattern_curr,
            f.lines_prev,
            f.lines_curr,
            f.ms_total
        );
    }
    out
}

/// Segment lengths of the evaluation, metres along the reference path.
pub const EVAL_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KittiErrors {
    /// Mean translation error over all segments, percent of segment length.
    pub translation_pct: f64,
    /// Mean rotation error, degrees per metre.
    pub rotation_deg_per_m: f64,
    pub segments: usize,
}

/// Relative-pose drift of `est` against `gt` over segments of
/// [`EVAL_LENGTHS`] starting at every frame.
pub fn evaluate_kitti(gt: &Trajectory, est: &Trajectory) -> Result<KittiErrors> {
    evaluate_segments(gt, est, &EVAL_LENGTHS)
}

/// As [`evaluate_kitti`] with custom segment lengths.
pub fn evaluate_segments(gt: &Trajectory, est: &Trajectory, lengths: &[f64]) -> Result<KittiErrors> {
    if gt.len() != est.len() {
        return Err(Error::InvalidArgument(format!("trajectories differ in length: {} vs {}", gt.len(), est.len())));
    }
    if gt.len() < 2 {
        return Err(Error::InvalidArgument("need at least two poses".into()));
    }
    let mut dist = vec![0.0];
    for w in gt.poses.windows(2) {
        let d = dist.last().unwrap() + (w[1].translation - w[0].translation).norm();
        dist.push(d);
    }
    let (mut t_sum, mut r_sum, mut segments) = (0.0, 0.0, 0usize);
    for first in 0..gt.len() {
        for &len in lengths {
            let Some(last) = (first..gt.len()).find(|&j| dist[j] > dist[first] + len) else {
                continue;
            };
            let dg = gt.poses[first].inverse().compose(&gt.poses[last]);
            let de = est.poses[first].inverse().compose(&est.poses[last]);
            let err = de.inverse().compose(&dg);
            t_sum += err.translation.norm() / len;
            r_sum += rotation_angle(&err.rotation) / len;
            segments += 1;
        }
    }
    if segments == 0 {
        return Err(Error::NoValidSegments);
    }
    Ok(KittiErrors {
        translation_pct: 100.0 * t_sum / segments as f64,
        rotation_deg_per_m: (r_sum / segments as f64).to_degrees(),
        segments,
    })
}

/// Writes `000000.bin`, ... for each pose, the ground-truth poses re-anchored
/// at the first frame as `poses.txt`, and an `odometry.cfg` matching the
/// sensor's ring count.
pub fn write_synthetic(scene: &SyntheticScene, trajectory: &[RigidTransform], dir: &Path) -> Result<()> {
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, scan) in scene.synth_sequence(trajectory).iter().enumerate() {
        write_scan_binary(scan, &dir.join(format!("{i:06}.bin")))?;
    }
    write_poses(&Trajectory::new(trajectory.to_vec()).anchored(), &dir.join("poses.txt"))?;
    let cfg = dir.join("odometry.cfg");
    fs::write(&cfg, format!("ring_count = {}\n", scene.sensor.ring_count)).map_err(|e| Error::io(&cfg, e))
}
