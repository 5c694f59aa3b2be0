//! Per-view frustum encoding and fusion into a canonical latent object.

mod encoder;
mod fusion;
mod latent;
mod view;

pub use encoder::{FrustumSpec, OccupancyEncoder, ViewEncoder};
pub use fusion::{fuse, EmaFusion, FusionKind, FusionStrategy, RecurrentFusion};
pub use latent::{build_latent, encode_to_object, LatentObject, ModelingConfig, OCCUPANCY_THRESHOLD};
pub use view::ObservedView;
