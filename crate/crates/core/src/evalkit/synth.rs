//! Analytic ray-primitive renderer used as ground truth.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ModelPoints;
use crate::error::{Error, Result};
use crate::geometry::{
    fibonacci_directions, look_at_rotation, CameraIntrinsics, CameraParams, RigidTransform, Viewport,
};
use crate::modeling::ObservedView;
use crate::raster::Raster;

const HIT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Oriented box; `pose` maps box-local coordinates to the object frame.
    Box {
        pose: RigidTransform,
        half_extents: Vector3<f64>,
    },
    /// Capped cylinder along the local z axis.
    Cylinder {
        pose: RigidTransform,
        radius: f64,
        half_height: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Sphere { radius, center } => *radius > 0.0 && center.iter().all(|c| c.is_finite()),
            Primitive::Box { half_extents, .. } => half_extents.iter().all(|h| *h > 0.0),
            Primitive::Cylinder {
                radius, half_height, ..
            } => *radius > 0.0 && *half_height > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("degenerate primitive {self:?}")))
        }
    }

    /// Radius of a ball about the object origin containing the primitive.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => center.norm() + radius,
            Primitive::Box { pose, half_extents } => pose.translation.norm() + half_extents.norm(),
            Primitive::Cylinder {
                pose,
                radius,
                half_height,
            } => pose.translation.norm() + (radius * radius + half_height * half_height).sqrt(),
        }
    }

    /// Nearest ray parameter `s > 0` with `o + s d` on the surface, and the outward normal.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Primitive::Sphere { center, radius } => {
                let oc = o - center;
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let s = [(-b - sq) / a, (-b + sq) / a].into_iter().find(|s| *s > HIT_EPS)?;
                Some((s, (o + s * d - center) / *radius))
            }
            Primitive::Box { pose, half_extents } => {
                let inv = pose.inverse();
                let lo = inv.apply(o);
                let ld = inv.rotation * d;
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut n0, mut n1) = (0usize, 0usize);
                for a in 0..3 {
                    if ld[a].abs() < 1e-300 {
                        if lo[a].abs() > half_extents[a] {
                            return None;
                        }
                        continue;
                    }
                    let mut ta = (-half_extents[a] - lo[a]) / ld[a];
                    let mut tb = (half_extents[a] - lo[a]) / ld[a];
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    if ta > t0 {
                        t0 = ta;
                        n0 = a;
                    }
                    if tb < t1 {
                        t1 = tb;
                        n1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (s, axis) = if t0 > HIT_EPS {
                    (t0, n0)
                } else if t1 > HIT_EPS {
                    (t1, n1)
                } else {
                    return None;
                };
                let hit = lo + s * ld;
                let mut n = Vector3::zeros();
                n[axis] = hit[axis].signum();
                Some((s, pose.rotation * n))
            }
            Primitive::Cylinder {
                pose,
                radius,
                half_height,
            } => {
                let inv = pose.inverse();
                let lo = inv.apply(o);
                let ld = inv.rotation * d;
                let mut best: Option<(f64, Vector3<f64>)> = None;
                let mut consider = |s: f64, n: Vector3<f64>| {
                    if s > HIT_EPS && best.is_none_or(|(b, _)| s < b) {
                        best = Some((s, n));
                    }
                };
                let a = ld.x * ld.x + ld.y * ld.y;
                if a > 1e-300 {
                    let b = lo.x * ld.x + lo.y * ld.y;
                    let c = lo.x * lo.x + lo.y * lo.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for s in [(-b - sq) / a, (-b + sq) / a] {
                            let p = lo + s * ld;
                            if p.z.abs() <= *half_height {
                                consider(s, Vector3::new(p.x, p.y, 0.0) / *radius);
                            }
                        }
                    }
                }
                if ld.z.abs() > 1e-300 {
                    for cap in [-*half_height, *half_height] {
                        let s = (cap - lo.z) / ld.z;
                        let p = lo + s * ld;
                        if p.x * p.x + p.y * p.y <= radius * radius {
                            consider(s, Vector3::new(0.0, 0.0, cap.signum()));
                        }
                    }
                }
                best.map(|(s, n)| (s, pose.rotation * n))
            }
        }
    }

    /// True when `p` is strictly inside (by more than `margin`).
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm() < radius - margin,
            Primitive::Box { pose, half_extents } => {
                let l = pose.inverse().apply(p);
                (0..3).all(|a| l[a].abs() < half_extents[a] - margin)
            }
            Primitive::Cylinder {
                pose,
                radius,
                half_height,
            } => {
                let l = pose.inverse().apply(p);
                l.xy().norm() < radius - margin && l.z.abs() < half_height - margin
            }
        }
    }

    fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Primitive::Box { half_extents: h, .. } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Primitive::Cylinder {
                radius, half_height, ..
            } => 2.0 * PI * radius * (2.0 * half_height) + 2.0 * PI * radius * radius,
        }
    }

    /// `n` roughly uniform surface points from a Fibonacci spiral.
    fn surface_points(&self, n: usize) -> Vec<Vector3<f64>> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        match self {
            Primitive::Sphere { center, radius } => fibonacci_directions(n)
                .into_iter()
                .map(|d| center + d * *radius)
                .collect(),
            Primitive::Box { pose, half_extents: h } => {
                // faces in proportion to area, each filled with a 2D Fibonacci lattice
                let faces = [
                    (0usize, 1usize, 2usize, 1.0),
                    (0, 1, 2, -1.0),
                    (1, 2, 0, 1.0),
                    (1, 2, 0, -1.0),
                    (2, 0, 1, 1.0),
                    (2, 0, 1, -1.0),
                ];
                let total = self.area();
                let mut out = Vec::with_capacity(n);
                for (a, b, normal, sign) in faces {
                    let area = 4.0 * h[a] * h[b];
                    let m = ((n as f64) * area / total).round().max(1.0) as usize;
                    for i in 0..m {
                        let uv = fibonacci_square(i, m);
                        let mut p = Vector3::zeros();
                        p[a] = (2.0 * uv.x - 1.0) * h[a];
                        p[b] = (2.0 * uv.y - 1.0) * h[b];
                        p[normal] = sign * h[normal];
                        out.push(pose.apply(&p));
                    }
                }
                out
            }
            Primitive::Cylinder {
                pose,
                radius,
                half_height,
            } => {
                let total = self.area();
                let side = ((n as f64) * 4.0 * std::f64::consts::PI * radius * half_height / total).round() as usize;
                let cap = ((n.saturating_sub(side)) / 2).max(1);
                let mut out = Vec::with_capacity(n);
                for i in 0..side {
                    let z = (-1.0 + (2.0 * i as f64 + 1.0) / side as f64) * half_height;
                    let phi = golden * i as f64;
                    out.push(pose.apply(&Vector3::new(radius * phi.cos(), radius * phi.sin(), z)));
                }
                for sign in [-1.0, 1.0] {
                    for i in 0..cap {
                        let rho = radius * ((i as f64 + 0.5) / cap as f64).sqrt();
                        let phi = golden * i as f64;
                        out.push(pose.apply(&Vector3::new(rho * phi.cos(), rho * phi.sin(), sign * half_height)));
                    }
                }
                out
            }
        }
    }
}

fn fibonacci_square(i: usize, n: usize) -> Vector2<f64> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    Vector2::new(((i as f64 + 0.5) * phi).fract(), (i as f64 + 0.5) / n as f64)
}

/// Smooth procedural albedo in object coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    /// Spatial frequency in radians per meter.
    pub frequency: f64,
    pub phase: [f64; 3],
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            frequency: 40.0,
            phase: [0.0, 2.1, 4.2],
        }
    }
}

impl Texture {
    pub fn color(&self, p: &Vector3<f64>) -> [f64; 3] {
        let dirs = [
            Vector3::new(1.0, 0.3, 0.2),
            Vector3::new(-0.2, 1.0, 0.4),
            Vector3::new(0.3, -0.4, 1.0),
        ];
        std::array::from_fn(|c| {
            0.5 + 0.2 * (self.frequency * dirs[c].dot(p) + self.phase[c]).sin()
                + 0.2 * (0.7 * self.frequency * dirs[(c + 1) % 3].dot(p) + self.phase[c]).cos()
        })
    }
}

/// Primitive union with a texture, rendered through a shared pinhole camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub texture: Texture,
    pub intrinsics: CameraIntrinsics,
}

/// Ray hit: camera depth `z`, object-frame point and normal.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub depth: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::InvalidConfig("scene has no primitives".into()));
        }
        self.intrinsics.validate()?;
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Radius of a ball about the object origin containing every primitive.
    pub fn bounding_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(Primitive::bounding_radius)
            .fold(0.0, f64::max)
    }

    /// Closest hit along the camera ray through image point `(u, v)`.
    pub fn cast(&self, pose: &RigidTransform, u: f64, v: f64) -> Option<Hit> {
        let k = &self.intrinsics;
        let dir_cam = Vector3::new((u - k.u0) / k.fu, (v - k.v0) / k.fv, 1.0);
        let inv = pose.inverse();
        let o = inv.translation;
        let d = inv.rotation * dir_cam;
        // dir_cam has unit z, so the ray parameter is the camera depth
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(&o, &d))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(s, n)| Hit {
                depth: s,
                point: o + s * d,
                normal: n,
            })
    }

    pub fn inside(&self, p: &Vector3<f64>) -> bool {
        self.primitives.iter().any(|q| q.contains(p, 0.0))
    }

    pub fn render(&self, pose: &RigidTransform) -> Result<ObservedView> {
        self.validate()?;
        let k = self.intrinsics;
        let (w, h) = (k.width, k.height);
        let hits: Vec<Option<Hit>> = (0..w * h)
            .into_par_iter()
            .map(|idx| self.cast(pose, (idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5))
            .collect();
        let image = Raster::from_vec(
            w,
            h,
            hits.iter()
                .map(|hit| hit.map_or([0.0; 3], |h| self.texture.color(&h.point)))
                .collect(),
        );
        let mask = Raster::from_vec(w, h, hits.iter().map(|hit| hit.map_or(0.0, |_| 1.0)).collect());
        let depth = Raster::from_vec(w, h, hits.iter().map(|hit| hit.map_or(0.0, |h| h.depth)).collect());
        ObservedView::new(image, mask, depth, CameraParams::new(k, *pose, Viewport::full(&k)))
    }

    /// Surface samples of the union, with a tight diameter.
    pub fn model_points(&self, count: usize) -> Result<ModelPoints> {
        self.validate()?;
        let total: f64 = self.primitives.iter().map(Primitive::area).sum();
        let mut points = Vec::with_capacity(count);
        for (i, p) in self.primitives.iter().enumerate() {
            let n = ((count as f64) * p.area() / total).round().max(4.0) as usize;
            for q in p.surface_points(n) {
                let hidden = self
                    .primitives
                    .iter()
                    .enumerate()
                    .any(|(j, other)| j != i && other.contains(&q, 1e-9));
                if !hidden {
                    points.push(q);
                }
            }
        }
        ModelPoints::new(points)
    }
}

/// Object-to-camera poses looking at the origin from `n` lattice directions at `distance`.
pub fn orbit_poses(n: usize, distance: f64, seed: u64) -> Vec<RigidTransform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fibonacci_directions(n)
        .iter()
        .map(|d| {
            let roll = rng.random_range(0.0..std::f64::consts::TAU);
            RigidTransform::new(look_at_rotation(d, roll), Vector3::new(0.0, 0.0, distance))
        })
        .collect()
}

/// A random pose with the object origin at `distance` in front of the camera,
/// shifted laterally by at most `lateral` meters.
pub fn random_pose(rng: &mut impl Rng, distance: f64, lateral: f64) -> RigidTransform {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.sample::<f64, _>(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
    ));
    let t = Vector3::new(
        rng.random_range(-lateral..=lateral),
        rng.random_range(-lateral..=lateral),
        distance,
    );
    RigidTransform::new(q, t)
}

/// `base` turned by up to `max_deg` about a random axis (camera frame) and moved
/// by up to `max_t` meters in a random direction.
pub fn perturb_pose(rng: &mut impl Rng, base: &RigidTransform, max_deg: f64, max_t: f64) -> RigidTransform {
    let axis = nalgebra::Unit::new_normalize(in_cube(rng));
    let angle = rng.random_range(0.0..max_deg).to_radians();
    let dir = in_cube(rng).normalize();
    let dt = dir * rng.random_range(0.0..max_t);
    RigidTransform::new(UnitQuaternion::from_axis_angle(&axis, angle) * base.rotation, base.translation + dt)
}

fn in_cube(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// A random asymmetric object: a main box plus two offset parts, scaled so the
/// bounding radius about the origin equals `radius`.
pub fn random_object(rng: &mut impl Rng, radius: f64) -> Vec<Primitive> {
    let mut prims = vec![
        Primitive::Box {
            pose: RigidTransform::new(random_rotation(rng), Vector3::zeros()),
            half_extents: Vector3::new(
                rng.random_range(0.45..0.6),
                rng.random_range(0.25..0.4),
                rng.random_range(0.15..0.25),
            ),
        },
        Primitive::Sphere {
            center: random_offset(rng, 0.45),
            radius: rng.random_range(0.2..0.3),
        },
        Primitive::Cylinder {
            pose: RigidTransform::new(random_rotation(rng), random_offset(rng, 0.35)),
            radius: rng.random_range(0.1..0.18),
            half_height: rng.random_range(0.25..0.4),
        },
    ];
    let scale = radius / prims.iter().map(Primitive::bounding_radius).fold(0.0, f64::max);
    for p in &mut prims {
        *p = scale_primitive(p, scale);
    }
    prims
}

fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    random_pose(rng, 1.0, 0.0).rotation
}

fn random_offset(rng: &mut impl Rng, len: f64) -> Vector3<f64> {
    let v = Vector3::new(
        rng.sample::<f64, _>(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
    );
    v.normalize() * len
}

pub fn scale_primitive(p: &Primitive, s: f64) -> Primitive {
    match *p {
        Primitive::Sphere { center, radius } => Primitive::Sphere {
            center: center * s,
            radius: radius * s,
        },
        Primitive::Box { pose, half_extents } => Primitive::Box {
            pose: RigidTransform::new(pose.rotation, pose.translation * s),
            half_extents: half_extents * s,
        },
        Primitive::Cylinder {
            pose,
            radius,
            half_height,
        } => Primitive::Cylinder {
            pose: RigidTransform::new(pose.rotation, pose.translation * s),
            radius: radius * s,
            half_height: half_height * s,
        },
    }
}
