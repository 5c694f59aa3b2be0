//! Pinhole camera model, rigid pose algebra and viewport handling.

mod camera;
mod crop;
mod lattice;
mod rigid;
mod rotation;

pub use camera::{
    frustum_grid, zoom_viewport, CameraIntrinsics, CameraParams, PixelGrid, Viewport,
};
pub use crop::{
    crop_resample, resample_depth, resample_mask, resample_rgb, resample_scalar, sample_bilinear,
    sample_depth, sample_nearest, RasterKind, Resampled,
};
pub use lattice::{fibonacci_directions, fibonacci_orientations, look_at_rotation};
pub use rigid::RigidTransform;
pub use rotation::{
    canonicalize, quat_exp, quat_exp_jacobian, quat_log, quat_log_unit, rotation_angle,
    LogQuaternion, RotationJacobian,
};

/// Default zoom distance in object diameters.
pub const DEFAULT_ZOOM_DISTANCE: f64 = 2.0;
