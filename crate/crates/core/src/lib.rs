//! Latent voxel reconstruction, differentiable depth/mask rendering and
//! render-and-compare 6D pose estimation for objects seen in a handful of
//! posed reference views.

pub mod cli;
pub mod error;
pub mod evalkit;
mod fsutil;
pub mod geometry;
pub mod modeling;
pub mod objective;
pub mod pose;
pub mod raster;
pub mod rendering;
#[cfg(test)]
mod testutil;
pub mod voxels;

pub use error::{Error, Result};
