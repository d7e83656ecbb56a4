//! KITTI-format scan and pose I/O, plus ring recovery for unordered clouds.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Ring count of the HDL-64E.
pub const DEFAULT_RING_COUNT: usize = 64;

/// One LiDAR sweep in the sensor frame.
#[derive(Debug, Clone, Default)]
pub struct Scan {
    pub points: Vec<Point3>,
    pub intensity: Vec<f32>,
    /// Ring index per point, `< ring_count`.
    pub rings: Vec<usize>,
    pub ring_count: usize,
    pub frame_id: usize,
}

impl Scan {
    /// Builds a scan whose rings are recovered with [`assign_rings`].
    pub fn from_points(points: Vec<Point3>, ring_count: usize, frame_id: usize) -> Self {
        let rings = assign_rings(&points, ring_count);
        let intensity = vec![0.0; points.len()];
        Scan {
            points,
            intensity,
            rings,
            ring_count,
            frame_id,
        }
    }

    pub fn with_rings(points: Vec<Point3>, rings: Vec<usize>, ring_count: usize, frame_id: usize) -> Self {
        assert_eq!(points.len(), rings.len());
        debug_assert!(rings.iter().all(|&r| r < ring_count));
        let intensity = vec![0.0; points.len()];
        Scan {
            points,
            intensity,
            rings,
            ring_count,
            frame_id,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `t` to every point; ring labels are kept.
    pub fn transformed(&self, t: &RigidTransform) -> Scan {
        Scan {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            ..self.clone()
        }
    }
}

/// A decoded scan together with the number of non-finite returns dropped.
#[derive(Debug, Clone)]
pub struct DecodedScan {
    pub scan: Scan,
    pub dropped: usize,
}

/// Decodes packed little-endian `(x, y, z, reflectance)` float32 records.
pub fn decode_scan(bytes: &[u8], ring_count: usize, frame_id: usize) -> Result<DecodedScan> {
    if bytes.len() % 16 != 0 {
        return Err(Error::TruncatedScan {
            len: bytes.len() as u64,
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut intensity = Vec::with_capacity(bytes.len() / 16);
    let mut dropped = 0;
    for rec in bytes.chunks_exact(16) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        let (x, y, z, w) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && w.is_finite()) {
            dropped += 1;
            continue;
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        intensity.push(w);
    }
    let rings = assign_rings(&points, ring_count);
    Ok(DecodedScan {
        scan: Scan {
            points,
            intensity,
            rings,
            ring_count,
            frame_id,
        },
        dropped,
    })
}

/// Encodes a scan back to the packed float32 layout.
pub fn encode_scan(scan: &Scan) -> Vec<u8> {
    let mut out = Vec::with_capacity(scan.len() * 16);
    for (i, p) in scan.points.iter().enumerate() {
        let w = scan.intensity.get(i).copied().unwrap_or(0.0);
        for v in [p.x as f32, p.y as f32, p.z as f32, w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_scan_binary(path: &Path, ring_count: usize, frame_id: usize) -> Result<DecodedScan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scan(&bytes, ring_count, frame_id)
}

pub fn write_scan_binary(scan: &Scan, path: &Path) -> Result<()> {
    fs::write(path, encode_scan(scan)).map_err(|e| Error::io(path, e))
}

/// Lists `*.bin` files in `dir`, sorted by file name.
pub fn list_scans(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    Ok(files)
}

/// Vertical angle `atan2(z, √(x²+y²))` in radians.
pub fn vertical_angle(p: &Point3) -> f64 {
    p.z.atan2(p.x.hypot(p.y))
}

/// Splits the observed vertical-angle range into `ring_count` equal intervals
/// and labels each point with its interval. A zero-width range maps every
/// point to ring 0.
pub fn assign_rings(points: &[Point3], ring_count: usize) -> Vec<usize> {
    let ring_count = ring_count.max(1);
    let phis: Vec<f64> = points.iter().map(vertical_angle).collect();
    let (lo, hi) = phis
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0; points.len()];
    }
    phis.iter()
        .map(|&phi| {
            let r = ((phi - lo) / span * ring_count as f64).floor() as usize;
            r.min(ring_count - 1)
        })
        .collect()
}

/// Ordered absolute poses, one per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<RigidTransform>,
}

impl Trajectory {
    pub fn new(poses: Vec<RigidTransform>) -> Self {
        Trajectory { poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Re-expresses every pose relative to the first one, so pose 0 is identity.
    pub fn anchored(&self) -> Trajectory {
        match self.poses.first() {
            None => self.clone(),
            Some(first) => {
                let inv = first.inverse();
                Trajectory::new(self.poses.iter().map(|p| inv.compose(p)).collect())
            }
        }
    }

    /// Chains relative motions starting from identity.
    pub fn from_relative(motions: &[RigidTransform]) -> Trajectory {
        let mut poses = Vec::with_capacity(motions.len() + 1);
        poses.push(RigidTransform::identity());
        for m in motions {
            let last = *poses.last().unwrap();
            poses.push(last.compose(m));
        }
        Trajectory::new(poses)
    }
}

/// Twelve decimals, trailing zeros trimmed, never "-0".
fn clean(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

/// One row-major 3×4 `[R | t]` line.
pub fn format_pose(pose: &RigidTransform) -> String {
    let m = pose.to_matrix();
    let mut fields = Vec::with_capacity(12);
    for r in 0..3 {
        for c in 0..4 {
            fields.push(clean(m[(r, c)]));
        }
    }
    fields.join(" ")
}

pub fn parse_pose(line: &str, line_no: usize) -> Result<RigidTransform> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|e| Error::MalformedPose {
                line: line_no,
                reason: format!("{tok:?}: {e}"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != 12 {
        return Err(Error::MalformedPose {
            line: line_no,
            reason: format!("expected 12 values, found {}", values.len()),
        });
    }
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            m[(r, c)] = values[4 * r + c];
        }
    }
    Ok(RigidTransform::from_matrix(&m))
}

pub fn write_poses(traj: &Trajectory, path: &Path) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for pose in &traj.poses {
        writeln!(w, "{}", format_pose(pose)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a pose file; blank lines are skipped, line numbers are 1-based.
pub fn parse_poses(text: &str) -> Result<Trajectory> {
    let poses = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_pose(l, i + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory::new(poses))
}

pub fn read_poses(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text)
}
