use serde::{Deserialize, Serialize};

use super::view::ObservedView;
use crate::error::{Error, Result};
use crate::geometry::{
    resample_depth, resample_mask, zoom_viewport, CameraIntrinsics, PixelGrid, Viewport,
    DEFAULT_ZOOM_DISTANCE,
};
use crate::voxels::{deproject, FeatureImage, FeatureVolume, VolumeFrame};

/// Where and how finely a view is sampled into a camera frustum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrustumSpec {
    pub viewport: Viewport,
    pub z_center: f64,
    pub radius: f64,
    /// `[nx, ny, nz]`.
    pub dims: [usize; 3],
}

impl FrustumSpec {
    /// Zoomed frustum around an object of `radius` centered at `center_camera`.
    pub fn around(
        intrinsics: &CameraIntrinsics,
        center_camera: &nalgebra::Vector3<f64>,
        radius: f64,
        dims: [usize; 3],
    ) -> Result<Self> {
        let near = center_camera.z - radius;
        if !(near > 0.0) {
            return Err(Error::ObjectBehindCamera { near });
        }
        let viewport = zoom_viewport(intrinsics, center_camera, 2.0 * radius, DEFAULT_ZOOM_DISTANCE)?;
        Ok(Self {
            viewport,
            z_center: center_camera.z,
            radius,
            dims,
        })
    }

    pub fn frame(&self, intrinsics: &CameraIntrinsics) -> VolumeFrame {
        VolumeFrame::CameraFrustum {
            intrinsics: *intrinsics,
            viewport: self.viewport,
            z_center: self.z_center,
            radius: self.radius,
        }
    }

    pub fn pixel_grid(&self) -> PixelGrid {
        PixelGrid::new(self.viewport, self.dims[0], self.dims[1])
    }

    /// Camera depth of slice `k`.
    pub fn slice_depth(&self, k: usize) -> f64 {
        self.z_center - self.radius + (k as f64 + 0.5) / self.dims[2] as f64 * 2.0 * self.radius
    }
}

/// 2D encoder producing `C = C' * D` channels on the frustum's pixel grid.
pub trait ViewEncoder: Send + Sync {
    /// Channels `C` of the 2D output for a frustum with `depth_bins` slices.
    fn channels(&self, depth_bins: usize) -> usize;

    fn encode(&self, view: &ObservedView, frustum: &FrustumSpec) -> Result<FeatureImage>;

    /// Encodes then lifts into the frustum volume.
    fn encode_volume(&self, view: &ObservedView, frustum: &FrustumSpec) -> Result<FeatureVolume> {
        let image = self.encode(view, frustum)?;
        deproject(&image, frustum.dims[2], frustum.frame(&view.camera.intrinsics))
    }
}

/// Deterministic occupancy encoder: one channel per depth slice holding `1`
/// where the slice is inside the silhouette and not in front of the measured
/// surface by more than `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEncoder {
    /// Depth tolerance in depth-slice pitches.
    pub tau_pitches: f64,
}

impl Default for OccupancyEncoder {
    fn default() -> Self {
        Self { tau_pitches: 2.0 }
    }
}

impl OccupancyEncoder {
    pub fn tau(&self, frustum: &FrustumSpec) -> f64 {
        self.tau_pitches * 2.0 * frustum.radius / frustum.dims[2] as f64
    }
}

impl ViewEncoder for OccupancyEncoder {
    fn channels(&self, depth_bins: usize) -> usize {
        depth_bins
    }

    fn encode(&self, view: &ObservedView, frustum: &FrustumSpec) -> Result<FeatureImage> {
        if view.mask.count_positive() == 0 {
            return Err(Error::EmptyMask);
        }
        let grid = frustum.pixel_grid();
        let mask = resample_mask(&view.mask, &grid)?;
        let depth = resample_depth(&view.depth, &grid)?;
        let [nx, ny, nz] = frustum.dims;
        let tau = self.tau(frustum);
        let mut out = FeatureImage::zeros(nz, nx, ny);
        for k in 0..nz {
            let z = frustum.slice_depth(k);
            for y in 0..ny {
                for x in 0..nx {
                    let d = depth.get(x, y);
                    if mask.get(x, y) > 0.5 && (d <= 0.0 || z >= d - tau) {
                        out.set(k, x, y, 1.0);
                    }
                }
            }
        }
        Ok(out)
    }
}
