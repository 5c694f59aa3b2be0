//! Feature volumes, trilinear sampling and rigid resampling between frames.

mod dump;
mod projection;
mod sample;
mod transform;
mod volume;

pub use dump::{read_dump, sidecar_path, write_dump, DumpHeader};
pub use projection::{deproject, project_unit, FeatureImage};
pub use sample::TrilinearStencil;
pub(crate) use transform::inverse_point_jacobian;
pub use transform::{resample_rigid, resample_rigid_with_jacobian};
pub(crate) use volume::GridCursor;
pub use volume::{FeatureVolume, VolumeFrame};
