//! Ray-cast LiDAR simulator over a scene of simple surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, Rotation3, UnitVec3, Vec3};
use crate::ingest::Scan;

/// Draws a direction from the von Mises-Fisher distribution on S² (Wood's method).
pub fn sample_vmf<R: Rng + ?Sized>(rng: &mut R, mu: &UnitVec3, kappa: f64) -> UnitVec3 {
    let u: f64 = rng.gen();
    let w = if kappa > 0.0 {
        (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0)
    } else {
        2.0 * u - 1.0
    };
    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    let (e1, e2) = crate::rotation::sphere::tangent_basis(mu);
    let s = (1.0 - w * w).max(0.0).sqrt();
    UnitVec3::new_normalize(mu.into_inner() * w + (e1 * phi.cos() + e2 * phi.sin()) * s)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Infinite horizontal plane at height `z`.
    Ground { z: f64 },
    /// Vertical rectangle over the segment `a`-`b`, from `base` up to `base + height`.
    Wall { a: [f64; 2], b: [f64; 2], base: f64, height: f64 },
    /// Vertical cylinder, outer surface only.
    Cylinder { center: [f64; 2], radius: f64, base: f64, height: f64 },
}

impl Surface {
    /// Smallest ray parameter `t > 0` at which `o + t·d` meets the surface.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        const EPS: f64 = 1e-9;
        match *self {
            Surface::Ground { z } => {
                if d.z.abs() < EPS {
                    return None;
                }
                let t = (z - o.z) / d.z;
                (t > EPS).then_some(t)
            }
            Surface::Wall { a, b, base, height } => {
                let seg = [b[0] - a[0], b[1] - a[1]];
                let len2 = seg[0] * seg[0] + seg[1] * seg[1];
                let n = [-seg[1], seg[0]];
                let denom = n[0] * d.x + n[1] * d.y;
                if denom.abs() < EPS || len2 == 0.0 {
                    return None;
                }
                let t = (n[0] * (a[0] - o.x) + n[1] * (a[1] - o.y)) / denom;
                if t <= EPS {
                    return None;
                }
                let p = o + d * t;
                let s = ((p.x - a[0]) * seg[0] + (p.y - a[1]) * seg[1]) / len2;
                ((0.0..=1.0).contains(&s) && p.z >= base && p.z <= base + height).then_some(t)
            }
            Surface::Cylinder { center, radius, base, height } => {
                let (px, py) = (o.x - center[0], o.y - center[1]);
                let qa = d.x * d.x + d.y * d.y;
                if qa < EPS {
                    return None;
                }
                let qb = 2.0 * (px * d.x + py * d.y);
                let qc = px * px + py * py - radius * radius;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 || qc < 0.0 {
                    return None;
                }
                let t = (-qb - disc.sqrt()) / (2.0 * qa);
                let z = o.z + d.z * t;
                (t > EPS && z >= base && z <= base + height).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub ring_count: usize,
    pub rays_per_ring: usize,
    /// Elevation of the lowest and highest ring, degrees.
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub max_range: f64,
    pub min_range: f64,
    pub noise_sigma: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            ring_count: 32,
            rays_per_ring: 600,
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            max_range: 80.0,
            min_range: 1.0,
            noise_sigma: 0.01,
        }
    }
}

impl SensorModel {
    pub fn elevation(&self, ring: usize) -> f64 {
        if self.ring_count < 2 {
            return self.elevation_min_deg.to_radians();
        }
        let f = ring as f64 / (self.ring_count - 1) as f64;
        (self.elevation_min_deg + f * (self.elevation_max_deg - self.elevation_min_deg)).to_radians()
    }

    /// Unit ray direction in the sensor frame.
    pub fn ray(&self, ring: usize, step: usize) -> Vec3 {
        let e = self.elevation(ring);
        let a = std::f64::consts::TAU * step as f64 / self.rays_per_ring as f64;
        Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub surfaces: Vec<Surface>,
    pub sensor: SensorModel,
    /// Height of the sensor above the ground for the trajectory helpers.
    pub sensor_height: f64,
    pub seed: u64,
}

impl Default for SyntheticScene {
    /// Ground, two perpendicular walls and one cylinder.
    fn default() -> Self {
        SyntheticScene {
            surfaces: vec![
                Surface::Ground { z: 0.0 },
                Surface::Wall { a: [-60.0, 30.0], b: [60.0, 30.0], base: 0.0, height: 8.0 },
                Surface::Wall { a: [40.0, -60.0], b: [40.0, 60.0], base: 0.0, height: 8.0 },
                Surface::Cylinder { center: [0.0, 0.0], radius: 1.0, base: 0.0, height: 6.0 },
            ],
            sensor: SensorModel::default(),
            sensor_height: 1.73,
            seed: 7,
        }
    }
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if self.surfaces.is_empty() {
            return Err(Error::Config("scene has no surfaces".into()));
        }
        let s = &self.sensor;
        if !(s.noise_sigma >= 0.0) || s.ring_count == 0 || s.rays_per_ring == 0 || !(s.max_range > s.min_range) {
            return Err(Error::Config("invalid sensor model".into()));
        }
        Ok(())
    }

    /// Range of the nearest hit along a world ray.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        self.surfaces
            .iter()
            .filter_map(|s| s.intersect(origin, dir))
            .min_by(f64::total_cmp)
    }

    /// One scan from the sensor at `pose` (sensor to world). `noise_seed`
    /// fixes the range noise.
    pub fn scan_at(&self, pose: &RigidTransform, frame_id: usize, noise_seed: u64) -> Scan {
        let s = &self.sensor;
        let rays: Vec<(usize, usize)> = (0..s.ring_count)
            .flat_map(|r| (0..s.rays_per_ring).map(move |k| (r, k)))
            .collect();
        let hits: Vec<Option<f64>> = rays
            .par_iter()
            .map(|&(r, k)| self.cast(&pose.translation, &(pose.rotation * s.ray(r, k))))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = Normal::new(0.0, s.noise_sigma.max(0.0)).expect("finite sigma");
        let mut points = Vec::new();
        let mut rings = Vec::new();
        for (&(r, k), hit) in rays.iter().zip(&hits) {
            // One draw per ray, hit or not, so noise does not depend on scene content.
            let n = if s.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let Some(range) = hit else { continue };
            if *range > s.max_range || *range < s.min_range {
                continue;
            }
            points.push(Point3::from(s.ray(r, k) * (range + n)));
            rings.push(r);
        }
        Scan::with_rings(points, rings, s.ring_count, frame_id)
    }

    /// Scans along `trajectory`; frame `i` uses noise stream `seed + i`.
    pub fn synth_sequence(&self, trajectory: &[RigidTransform]) -> Vec<Scan> {
        trajectory
            .iter()
            .enumerate()
            .map(|(i, p)| self.scan_at(p, i, self.seed.wrapping_add(i as u64)))
            .collect()
    }
}

/// Sensor poses on a circle of `radius` about the origin, heading along the
/// tangent, `step` metres apart. The first pose is at `(radius, 0)`.
pub fn circle_trajectory(radius: f64, step: f64, frames: usize, height: f64) -> Vec<RigidTransform> {
    let dphi = step / radius;
    (0..frames)
        .map(|i| {
            let phi = dphi * i as f64;
            let heading = phi + std::f64::consts::FRAC_PI_2;
            RigidTransform::new(
                Rotation3::from_axis_angle(&Vec3::z_axis(), heading),
                Vec3::new(radius * phi.cos(), radius * phi.sin(), height),
            )
        })
        .collect()
}

/// Sensor poses along +x from `start`, `step` metres apart.
pub fn straight_trajectory(start: Vec3, step: f64, frames: usize) -> Vec<RigidTransform> {
    (0..frames)
        .map(|i| RigidTransform::from_translation(start + Vec3::x() * step * i as f64))
        .collect()
}

/// Parses a scene description of `key = value` lines.
///
/// Surfaces: `ground = z`, `wall = x1 y1 x2 y2 height [base]`,
/// `cylinder = cx cy radius height [base]`, each repeatable. Sensor keys:
/// `rings`, `rays_per_ring`, `elevation_min`, `elevation_max`, `max_range`,
/// `min_range`, `noise`, `sensor_height`, `seed`. With no surface lines the
/// default surfaces are kept.
pub fn parse_scene(text: &str) -> Result<SyntheticScene> {
    let mut scene = SyntheticScene::default();
    let mut surfaces = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Config(format!("scene line {}: {msg}", no + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
        let key = key.trim();
        let nums: Vec<f64> = value
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad("not a number")))
            .collect::<Result<_>>()?;
        let one = || -> Result<f64> {
            match nums.as_slice() {
                [v] => Ok(*v),
                _ => Err(bad("expected one value")),
            }
        };
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad("expected a non-negative integer"))
            }
        };
        match key {
            "ground" => surfaces.push(Surface::Ground { z: one()? }),
            "wall" => match nums.as_slice() {
                &[x1, y1, x2, y2, height] | &[x1, y1, x2, y2, height, _] => surfaces.push(Surface::Wall {
                    a: [x1, y1],
                    b: [x2, y2],
                    base: nums.get(5).copied().unwrap_or(0.0),
                    height,
                }),
                _ => return Err(bad("wall needs x1 y1 x2 y2 height [base]")),
            },
            "cylinder" => match nums.as_slice() {
                &[cx, cy, radius, height] | &[cx, cy, radius, height, _] => surfaces.push(Surface::Cylinder {
                    center: [cx, cy],
                    radius,
                    base: nums.get(4).copied().unwrap_or(0.0),
                    height,
                }),
                _ => return Err(bad("cylinder needs cx cy radius height [base]")),
            },
            "rings" => scene.sensor.ring_count = count(one()?)?,
            "rays_per_ring" => scene.sensor.rays_per_ring = count(one()?)?,
            "elevation_min" => scene.sensor.elevation_min_deg = one()?,
            "elevation_max" => scene.sensor.elevation_max_deg = one()?,
            "max_range" => scene.sensor.max_range = one()?,
            "min_range" => scene.sensor.min_range = one()?,
            "noise" => scene.sensor.noise_sigma = one()?,
            "sensor_height" => scene.sensor_height = one()?,
            "seed" => scene.seed = count(one()?)? as u64,
            other => return Err(bad(&format!("unknown key `{other}`"))),
        }
    }
    if !surfaces.is_empty() {
        scene.surfaces = surfaces;
    }
    scene.validate()?;
    Ok(scene)
}
