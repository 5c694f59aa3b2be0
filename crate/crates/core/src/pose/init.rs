use nalgebra::{UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::modeling::ObservedView;

/// Mask box and depth range of a query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskExtent {
    /// Center of the box spanned by the extreme masked pixel centers.
    pub center: Vector2<f64>,
    /// Box width and height in pixels, between extreme pixel centers.
    pub size: Vector2<f64>,
    pub z_min: f64,
    pub z_max: f64,
}

impl MaskExtent {
    pub fn of(query: &ObservedView) -> Result<Self> {
        let (x0, y0, x1, y1) = query.mask_bbox().ok_or(Error::EmptyMask)?;
        let mut z_min = f64::INFINITY;
        let mut z_max = f64::NEG_INFINITY;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = query.depth.get(x, y);
                if query.mask.get(x, y) > 0.5 && d > 0.0 && d.is_finite() {
                    z_min = z_min.min(d);
                    z_max = z_max.max(d);
                }
            }
        }
        if !z_min.is_finite() {
            return Err(Error::NoValidDepth);
        }
        Ok(Self {
            center: Vector2::new(0.5 * (x0 + x1) as f64 + 0.5, 0.5 * (y0 + y1) as f64 + 0.5),
            size: Vector2::new((x1 - x0) as f64, (y1 - y0) as f64),
            z_min,
            z_max,
        })
    }
}

/// Camera-frame object center guessed from the mask box and its depths.
///
/// The depth range only sees the visible surface, so the cube behind the
/// nearest depth is taken as deep as the object is wide (or as the depth
/// spread, if larger).
pub fn init_translation(query: &ObservedView) -> Result<Vector3<f64>> {
    let ext = MaskExtent::of(query)?;
    let k = &query.camera.intrinsics;
    let width = ext.size.x * ext.z_min / k.fu;
    let height = ext.size.y * ext.z_min / k.fv;
    let z = ext.z_min + 0.5 * width.max(height).max(ext.z_max - ext.z_min);
    k.unproject(&ext.center, z)
}

/// Translation that puts the nearest of `points` (object frame, rotated by
/// `rotation`) at the observed nearest depth and the center of their box on
/// the ray through the mask box center.
pub fn aligned_translation(
    intrinsics: &CameraIntrinsics,
    extent: &MaskExtent,
    points: &[Vector3<f64>],
    rotation: &UnitQuaternion<f64>,
) -> Result<Vector3<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        let q = rotation * p;
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let c = 0.5 * (lo + hi);
    let tz = extent.z_min - lo.z;
    let ray = intrinsics.unproject(&extent.center, tz + c.z)?;
    Ok(Vector3::new(ray.x - c.x, ray.y - c.y, tz))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraParams, RigidTransform, Viewport};
    use crate::raster::Raster;

    fn view_of(k: CameraIntrinsics, f: impl Fn(f64, f64) -> Option<f64>) -> ObservedView {
        let depth = Raster::from_fn(k.width, k.height, |x, y| f(x as f64 + 0.5, y as f64 + 0.5).unwrap_or(0.0));
        let mask = depth.map(|&d| if d > 0.0 { 1.0 } else { 0.0 });
        let camera = CameraParams::new(k, RigidTransform::identity(), Viewport::full(&k));
        ObservedView::new(Raster::filled(k.width, k.height, Default::default()), mask, depth, camera).unwrap()
    }

    /// Visible depth of a sphere of `radius` centered at `c`, by ray casting.
    fn sphere(k: CameraIntrinsics, c: Vector3<f64>, radius: f64) -> impl Fn(f64, f64) -> Option<f64> {
        move |u, v| {
            let d = Vector3::new((u - k.u0) / k.fu, (v - k.v0) / k.fv, 1.0);
            let a = d.dot(&d);
            let b = d.dot(&c);
            let disc = b * b - a * (c.dot(&c) - radius * radius);
            (disc >= 0.0).then(|| (b - disc.sqrt()) / a)
        }
    }

    #[test]
    fn sphere_center_is_recovered() {
        let k = CameraIntrinsics::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap();
        let t = init_translation(&view_of(k, sphere(k, Vector3::new(0.0, 0.0, 1.0), 0.05))).unwrap();
        assert!(t.x.abs() < 0.005 && t.y.abs() < 0.005 && (t.z - 1.0).abs() < 0.01, "{t}");
    }

    #[test]
    fn translated_sphere_shifts_along() {
        let k = CameraIntrinsics::new(600.0, 600.0, 160.0, 120.0, 320, 240).unwrap();
        let base = init_translation(&view_of(k, sphere(k, Vector3::new(0.0, 0.0, 1.0), 0.05))).unwrap();
        let moved = init_translation(&view_of(k, sphere(k, Vector3::new(0.06, -0.04, 1.0), 0.05))).unwrap();
        let shift = moved - base;
        assert!((shift.x - 0.06).abs() < 0.004 && (shift.y + 0.04).abs() < 0.004, "{shift}");
    }

    #[test]
    fn single_pixel_unprojects() {
        let k = CameraIntrinsics::new(500.0, 500.0, 32.0, 32.0, 64, 64).unwrap();
        let t = init_translation(&view_of(k, |u, v| (u == 40.5 && v == 10.5).then_some(0.8))).unwrap();
        let want = k.unproject(&Vector2::new(40.5, 10.5), 0.8).unwrap();
        assert!((t - want).norm() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let k = CameraIntrinsics::new(500.0, 500.0, 32.0, 32.0, 64, 64).unwrap();
        assert!(matches!(init_translation(&view_of(k, |_, _| None)), Err(Error::EmptyMask)));
        let mut v = view_of(k, |u, _| (u < 10.0).then_some(0.5));
        v.depth = v.depth.map(|_| 0.0);
        assert!(matches!(init_translation(&v), Err(Error::NoValidDepth)));
    }
}
