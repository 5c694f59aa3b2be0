use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Viewport};

/// Spatial embedding of a voxel grid.
///
/// Frustum frames live in camera coordinates and are bounded by the viewport
/// laterally and by `[z_center - radius, z_center + radius]` in depth. Cube frames
/// live in object coordinates with half-extent `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolumeFrame {
    CameraFrustum {
        intrinsics: CameraIntrinsics,
        viewport: Viewport,
        z_center: f64,
        radius: f64,
    },
    CanonicalCube {
        center: Vector3<f64>,
        radius: f64,
    },
}

impl VolumeFrame {
    pub fn cube(radius: f64) -> Self {
        VolumeFrame::CanonicalCube {
            center: Vector3::zeros(),
            radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            VolumeFrame::CameraFrustum {
                intrinsics,
                viewport,
                z_center,
                radius,
            } => {
                intrinsics.validate()?;
                if !viewport.is_valid() {
                    return Err(Error::InvalidCamera(format!("degenerate viewport {viewport:?}")));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConfig(format!("frustum radius {radius}")));
                }
                if !(z_center - radius > 0.0) {
                    return Err(Error::ObjectBehindCamera {
                        near: z_center - radius,
                    });
                }
                Ok(())
            }
            VolumeFrame::CanonicalCube { radius, center } => {
                if !(*radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidConfig(format!("cube radius {radius}")));
                }
                Ok(())
            }
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            VolumeFrame::CameraFrustum { radius, .. } | VolumeFrame::CanonicalCube { radius, .. } => {
                *radius
            }
        }
    }

    /// Center of voxel `(i, j, k)` in the frame's own coordinates.
    #[inline]
    pub fn voxel_center(&self, dims: [usize; 3], i: usize, j: usize, k: usize) -> Vector3<f64> {
        match self {
            VolumeFrame::CameraFrustum {
                intrinsics,
                viewport,
                z_center,
                radius,
            } => {
                let z = z_center - radius + (k as f64 + 0.5) / dims[2] as f64 * 2.0 * radius;
                intrinsics.unproject_unchecked(
                    viewport.u_sample(i, dims[0]),
                    viewport.v_sample(j, dims[1]),
                    z,
                )
            }
            VolumeFrame::CanonicalCube { center, radius } => {
                let idx = [i, j, k];
                Vector3::from_fn(|a, _| {
                    center[a] - radius + (idx[a] as f64 + 0.5) / dims[a] as f64 * 2.0 * radius
                })
            }
        }
    }

    /// All voxel centers, x fastest.
    pub fn voxel_centers(&self, dims: [usize; 3]) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    out.push(self.voxel_center(dims, i, j, k));
                }
            }
        }
        out
    }

    /// Continuous grid coordinates of `p` (voxel centers at integers) and the
    /// Jacobian `d grid / d p`.
    #[inline]
    pub fn to_grid(&self, dims: [usize; 3], p: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        match self {
            VolumeFrame::CameraFrustum {
                intrinsics,
                viewport,
                z_center,
                radius,
            } => {
                if !(p.z > 1e-9) {
                    return (
                        Vector3::new(dims[0] as f64 / 2.0, dims[1] as f64 / 2.0, -1.0),
                        Matrix3::zeros(),
                    );
                }
                let inv_z = 1.0 / p.z;
                let u = intrinsics.fu * p.x * inv_z + intrinsics.u0;
                let v = intrinsics.fv * p.y * inv_z + intrinsics.v0;
                let sx = dims[0] as f64 / viewport.width();
                let sy = dims[1] as f64 / viewport.height();
                let sz = dims[2] as f64 / (2.0 * radius);
                let g = Vector3::new(
                    (u - viewport.u_minus) * sx - 0.5,
                    (v - viewport.v_minus) * sy - 0.5,
                    (p.z - (z_center - radius)) * sz - 0.5,
                );
                let ax = intrinsics.fu * inv_z * sx;
                let ay = intrinsics.fv * inv_z * sy;
                #[rustfmt::skip]
                let jac = Matrix3::new(
                    ax, 0.0, -ax * p.x * inv_z,
                    0.0, ay, -ay * p.y * inv_z,
                    0.0, 0.0, sz,
                );
                (g, jac)
            }
            VolumeFrame::CanonicalCube { center, radius } => {
                let s = Vector3::from_fn(|a, _| dims[a] as f64 / (2.0 * radius));
                let g = Vector3::from_fn(|a, _| (p[a] - (center[a] - radius)) * s[a] - 0.5);
                (g, Matrix3::from_diagonal(&s))
            }
        }
    }
}

/// Dense `C x nz x ny x nx` grid of feature vectors, stored `(c, z, y, x)` with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVolume {
    channels: usize,
    dims: [usize; 3],
    data: Vec<f64>,
    frame: VolumeFrame,
}

impl FeatureVolume {
    pub fn zeros(channels: usize, dims: [usize; 3], frame: VolumeFrame) -> Self {
        Self::filled(channels, dims, frame, 0.0)
    }

    pub fn filled(channels: usize, dims: [usize; 3], frame: VolumeFrame, value: f64) -> Self {
        Self {
            channels,
            dims,
            data: vec![value; channels * dims[0] * dims[1] * dims[2]],
            frame,
        }
    }

    pub fn from_vec(
        channels: usize,
        dims: [usize; 3],
        frame: VolumeFrame,
        data: Vec<f64>,
    ) -> Result<Self> {
        let expected = channels * dims[0] * dims[1] * dims[2];
        if data.len() != expected || dims.iter().any(|&d| d == 0) || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "volume data has {} entries, expected {channels} x {dims:?}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!("non-finite volume entry {bad}")));
        }
        Ok(Self {
            channels,
            dims,
            data,
            frame,
        })
    }

    /// Fills channel 0..C by evaluating `f` at each voxel center (frame coordinates).
    pub fn from_fn(
        channels: usize,
        dims: [usize; 3],
        frame: VolumeFrame,
        mut f: impl FnMut(usize, &Vector3<f64>) -> f64,
    ) -> Self {
        let centers = frame.voxel_centers(dims);
        let mut data = Vec::with_capacity(channels * centers.len());
        for c in 0..channels {
            data.extend(centers.iter().map(|p| f(c, p)));
        }
        Self {
            channels,
            dims,
            data,
            frame,
        }
    }

    pub fn cubic(channels: usize, resolution: usize, frame: VolumeFrame) -> Self {
        Self::zeros(channels, [resolution; 3], frame)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `[nx, ny, nz]`.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Edge length `M` when the grid is cubic.
    pub fn resolution(&self) -> Option<usize> {
        (self.dims[0] == self.dims[1] && self.dims[1] == self.dims[2]).then_some(self.dims[0])
    }

    pub fn voxels_per_channel(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn frame(&self) -> &VolumeFrame {
        &self.frame
    }

    pub fn with_frame(mut self, frame: VolumeFrame) -> Self {
        self.frame = frame;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.voxels_per_channel();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize, k: usize) -> usize {
        ((c * self.dims[2] + k) * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(c, i, j, k)]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(c, i, j, k);
        self.data[idx] = value;
    }

    pub fn same_layout(&self, other: &FeatureVolume) -> bool {
        self.channels == other.channels && self.dims == other.dims && self.frame == other.frame
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// `(i, j, k)` of consecutive flat indices without per-step division.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GridCursor {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    nx: usize,
    ny: usize,
}

impl GridCursor {
    pub fn at(dims: [usize; 3], idx: usize) -> Self {
        let (nx, ny) = (dims[0], dims[1]);
        Self {
            i: idx % nx,
            j: (idx / nx) % ny,
            k: idx / (nx * ny),
            nx,
            ny,
        }
    }

    #[inline]
    pub fn advance(&mut self) {
        self.i += 1;
        if self.i == self.nx {
            self.i = 0;
            self.j += 1;
            if self.j == self.ny {
                self.j = 0;
                self.k += 1;
            }
        }
    }
}
