use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::rigid::RigidTransform;
use crate::error::{Error, Result};

const MIN_DEPTH: f64 = 1e-9;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fu: f64,
    pub fv: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fu: f64, fv: f64, u0: f64, v0: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fu,
            fv,
            u0,
            v0,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fu > 0.0 && self.fv > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fu, self.fv
            )));
        }
        if !(0.0..=self.width as f64).contains(&self.u0)
            || !(0.0..=self.height as f64).contains(&self.v0)
        {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} sensor",
                self.u0, self.v0, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fu, 0.0, self.u0, 0.0, self.fv, self.v0, 0.0, 0.0, 1.0)
    }

    /// `(u, v) = (fu x/z + u0, fv y/z + v0)` together with the depth `z`.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        if !(p.z > MIN_DEPTH) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok((
            Vector2::new(self.fu * p.x / p.z + self.u0, self.fv * p.y / p.z + self.v0),
            p.z,
        ))
    }

    pub fn unproject(&self, pixel: &Vector2<f64>, z: f64) -> Result<Vector3<f64>> {
        if !(z > MIN_DEPTH) {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(self.unproject_unchecked(pixel.x, pixel.y, z))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.u0) / self.fu * z, (v - self.v0) / self.fv * z, z)
    }

    /// Intrinsics of the image obtained by resampling `viewport` to `width x height`.
    pub fn cropped(&self, viewport: &Viewport, width: usize, height: usize) -> CameraIntrinsics {
        let sx = width as f64 / viewport.width();
        let sy = height as f64 / viewport.height();
        CameraIntrinsics {
            fu: self.fu * sx,
            fv: self.fv * sy,
            u0: (self.u0 - viewport.u_minus) * sx,
            v0: (self.v0 - viewport.v_minus) * sy,
            width,
            height,
        }
    }
}

/// Crop rectangle `c = (u-, v-, u+, v+)` in continuous pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub u_minus: f64,
    pub v_minus: f64,
    pub u_plus: f64,
    pub v_plus: f64,
}

impl Viewport {
    pub fn new(u_minus: f64, v_minus: f64, u_plus: f64, v_plus: f64) -> Result<Self> {
        let vp = Self {
            u_minus,
            v_minus,
            u_plus,
            v_plus,
        };
        if !(u_plus > u_minus && v_plus > v_minus) {
            return Err(Error::InvalidCamera(format!("degenerate viewport {vp:?}")));
        }
        Ok(vp)
    }

    pub fn full(intrinsics: &CameraIntrinsics) -> Self {
        Self {
            u_minus: 0.0,
            v_minus: 0.0,
            u_plus: intrinsics.width as f64,
            v_plus: intrinsics.height as f64,
        }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self {
            u_minus: c[0],
            v_minus: c[1],
            u_plus: c[2],
            v_plus: c[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.u_minus, self.v_minus, self.u_plus, self.v_plus]
    }

    pub fn width(&self) -> f64 {
        self.u_plus - self.u_minus
    }

    pub fn height(&self) -> f64 {
        self.v_plus - self.v_minus
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(
            0.5 * (self.u_minus + self.u_plus),
            0.5 * (self.v_minus + self.v_plus),
        )
    }

    pub fn is_valid(&self) -> bool {
        self.u_plus > self.u_minus && self.v_plus > self.v_minus
    }

    /// Center of sample `i` of `n` equal steps across the viewport width.
    #[inline]
    pub fn u_sample(&self, i: usize, n: usize) -> f64 {
        self.u_minus + (i as f64 + 0.5) * self.width() / n as f64
    }

    #[inline]
    pub fn v_sample(&self, j: usize, n: usize) -> f64 {
        self.v_minus + (j as f64 + 0.5) * self.height() / n as f64
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_minus && u <= self.u_plus && v >= self.v_minus && v <= self.v_plus
    }
}

/// Full camera description `theta = {K, E, c}`; `extrinsics` maps object to camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: RigidTransform,
    pub viewport: Viewport,
}

impl CameraParams {
    pub fn new(
        intrinsics: CameraIntrinsics,
        extrinsics: RigidTransform,
        viewport: Viewport,
    ) -> Self {
        Self {
            intrinsics,
            extrinsics,
            viewport,
        }
    }

    /// Clamps the viewport to the sensor when it overlaps it, otherwise leaves it.
    pub fn clamped_viewport(&self) -> Viewport {
        let k = &self.intrinsics;
        let vp = Viewport {
            u_minus: self.viewport.u_minus.max(0.0),
            v_minus: self.viewport.v_minus.max(0.0),
            u_plus: self.viewport.u_plus.min(k.width as f64),
            v_plus: self.viewport.v_plus.min(k.height as f64),
        };
        if vp.is_valid() {
            vp
        } else {
            self.viewport
        }
    }

    /// Camera-frame depth of the object origin.
    pub fn object_depth(&self) -> f64 {
        self.extrinsics.translation.z
    }
}

/// Output pixel lattice: `width x height` sample centers spread over `viewport`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub viewport: Viewport,
    pub width: usize,
    pub height: usize,
}

impl PixelGrid {
    pub fn new(viewport: Viewport, width: usize, height: usize) -> Self {
        Self {
            viewport,
            width,
            height,
        }
    }

    pub fn square(viewport: Viewport, size: usize) -> Self {
        Self::new(viewport, size, size)
    }

    pub fn full(intrinsics: &CameraIntrinsics) -> Self {
        Self::new(Viewport::full(intrinsics), intrinsics.width, intrinsics.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image coordinates of the center of sample `(a, b)`.
    #[inline]
    pub fn pixel_center(&self, a: usize, b: usize) -> (f64, f64) {
        (
            self.viewport.u_sample(a, self.width),
            self.viewport.v_sample(b, self.height),
        )
    }
}

/// Crop that makes an object of `diameter` at distance `d` look as if seen from
/// `target_distance` diameters away: `w_b = fu * d' * diameter / d`, centered on
/// the projected centroid.
pub fn zoom_viewport(
    intrinsics: &CameraIntrinsics,
    object_center_camera: &Vector3<f64>,
    object_diameter: f64,
    target_distance: f64,
) -> Result<Viewport> {
    let (c, d) = intrinsics.project(object_center_camera)?;
    let wb = intrinsics.fu * target_distance * object_diameter / d;
    let hb = intrinsics.fv * target_distance * object_diameter / d;
    Viewport::new(
        c.x - wb / 2.0,
        c.y - hb / 2.0,
        c.x + wb / 2.0,
        c.y + hb / 2.0,
    )
}

/// Camera-frame voxel centers of a depth-bounded frustum, x fastest then y then z.
///
/// Voxel `(i, j, k)` unprojects the viewport point at fractional position
/// `((i+0.5)/nx, (j+0.5)/ny)` at depth `z_center - radius + (k+0.5)/nz * 2 radius`.
pub fn frustum_grid(
    camera: &CameraParams,
    z_center: f64,
    radius: f64,
    dims: [usize; 3],
) -> Result<Vec<Vector3<f64>>> {
    if !(z_center - radius > 0.0) {
        return Err(Error::NonPositiveDepth(z_center - radius));
    }
    let [nx, ny, nz] = dims;
    let vp = &camera.viewport;
    let k = &camera.intrinsics;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for kk in 0..nz {
        let z = z_center - radius + (kk as f64 + 0.5) / nz as f64 * 2.0 * radius;
        for j in 0..ny {
            let v = vp.v_sample(j, ny);
            for i in 0..nx {
                let u = vp.u_sample(i, nx);
                out.push(k.unproject_unchecked(u, v, z));
            }
        }
    }
    Ok(out)
}
