//! Depth and mask rendering of latent objects, plus image-based color.

mod decoder;
mod ibr;
mod render;

pub use decoder::{composite, composite_partials, Decoded, RayAdjoint, TransmittanceDecoder, VolumeDecoder, EPS_VIS};
pub use ibr::{blend_views, render_color, reproject_color, view_similarity, BlendConfig, Reprojection};
pub(crate) use render::sum_gradients;
pub use render::{
    camera_volume, camera_volume_backward, camera_volume_scatter, pose_frame, rays_backward, read_out, read_out_backward,
    render_backward, render_volume, PoseGradient, PoseParams, RenderOutput, RenderSetup, POSE_DIM,
};

use crate::error::Result;
use crate::geometry::CameraParams;
use crate::modeling::LatentObject;

/// Renders `latent` through `camera` onto `setup`'s target grid.
pub fn render(
    latent: &LatentObject,
    camera: &CameraParams,
    setup: &RenderSetup,
    decoder: &dyn VolumeDecoder,
) -> Result<RenderOutput> {
    render_volume(latent.volume(), &PoseParams::from_camera(camera), setup, decoder)
}
