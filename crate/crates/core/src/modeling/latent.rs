use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{FrustumSpec, ViewEncoder};
use super::fusion::{fuse, FusionStrategy};
use super::view::ObservedView;
use crate::error::{Error, Result};
use crate::voxels::{resample_rigid, FeatureVolume, VolumeFrame};

/// Occupancy threshold used by diagnostics and oracles.
pub const OCCUPANCY_THRESHOLD: f64 = 0.5;

/// Resolutions used when building a latent object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelingConfig {
    /// Edge length `M` of the canonical cube.
    pub resolution: usize,
    /// Lateral samples of each view frustum, per axis.
    pub frustum_lateral: usize,
    /// Depth slices of each view frustum.
    pub frustum_depth: usize,
}

impl ModelingConfig {
    /// Lateral oversampling keeps frustum samples finer than image pixels at
    /// working scale, so carving follows the silhouettes at pixel precision.
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            frustum_lateral: 8 * resolution,
            frustum_depth: resolution,
        }
    }

    pub fn frustum_dims(&self) -> [usize; 3] {
        [self.frustum_lateral, self.frustum_lateral, self.frustum_depth]
    }
}

/// Fused canonical volume `Psi` plus the views kept for image-based rendering.
#[derive(Clone, Debug)]
pub struct LatentObject {
    volume: FeatureVolume,
    radius: f64,
    views: Vec<ObservedView>,
}

impl LatentObject {
    pub fn new(volume: FeatureVolume, views: Vec<ObservedView>) -> Result<Self> {
        match *volume.frame() {
            VolumeFrame::CanonicalCube { center, radius } if center == nalgebra::Vector3::zeros() => {
                Ok(Self {
                    volume,
                    radius,
                    views,
                })
            }
            other => Err(Error::ShapeMismatch(format!(
                "latent volume must live in an origin-centered cube, got {other:?}"
            ))),
        }
    }

    pub fn volume(&self) -> &FeatureVolume {
        &self.volume
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn views(&self) -> &[ObservedView] {
        &self.views
    }

    pub fn resolution(&self) -> usize {
        self.volume.dims()[0]
    }

    /// Voxel mask of values `>= 0.5`.
    pub fn occupied(&self) -> Vec<bool> {
        self.volume
            .channel(0)
            .iter()
            .map(|&v| v >= OCCUPANCY_THRESHOLD)
            .collect()
    }
}

/// Encodes one view into its zoomed frustum and carries it into the canonical cube.
pub fn encode_to_object(
    view: &ObservedView,
    encoder: &dyn ViewEncoder,
    config: &ModelingConfig,
    radius: f64,
) -> Result<FeatureVolume> {
    let e = &view.camera.extrinsics;
    let frustum = FrustumSpec::around(&view.camera.intrinsics, &e.translation, radius, config.frustum_dims())?;
    let phi = encoder.encode_volume(view, &frustum)?;
    Ok(resample_rigid(
        &phi,
        &e.inverse(),
        &VolumeFrame::cube(radius),
        [config.resolution; 3],
    ))
}

pub fn build_latent(
    views: &[ObservedView],
    encoder: &dyn ViewEncoder,
    fusion: &FusionStrategy,
    config: &ModelingConfig,
    radius: f64,
) -> Result<LatentObject> {
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig(format!("object radius {radius}")));
    }
    let per_view: Vec<FeatureVolume> = views
        .par_iter()
        .map(|v| encode_to_object(v, encoder, config, radius))
        .collect::<Result<_>>()?;
    LatentObject::new(fuse(&per_view, fusion)?, views.to_vec())
}
