//! Lifting 2D feature grids to frustum volumes and collapsing them back.

use nalgebra::DMatrix;

use super::volume::{FeatureVolume, VolumeFrame};
use crate::error::{Error, Result};

/// `C x H x W` feature grid, stored `(c, y, x)` with x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureImage {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FeatureImage {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn from_vec(channels: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * width * height {
            return Err(Error::ShapeMismatch(format!(
                "feature image has {} entries, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite feature entry".into()));
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, value: f64) {
        let idx = (c * self.height + y) * self.width + x;
        self.data[idx] = value;
    }
}

/// Reshapes `C x M x M` into `(C/D) x D x M x M`: output channel `c'` at depth
/// `k` is input channel `c' * D + k`.
pub fn deproject(image: &FeatureImage, depth_bins: usize, frame: VolumeFrame) -> Result<FeatureVolume> {
    if depth_bins == 0 || image.channels % depth_bins != 0 {
        return Err(Error::IndivisibleChannels {
            channels: image.channels,
            depth_bins,
        });
    }
    // (c', k, y, x) flattened is exactly (c' * D + k, y, x)
    FeatureVolume::from_vec(
        image.channels / depth_bins,
        [image.width, image.height, depth_bins],
        frame,
        image.data.clone(),
    )
}

/// Folds depth into channels (inverse of [`deproject`]) and applies the per-pixel
/// linear map `mixing` of shape `C_out x (C' * D)`.
pub fn project_unit(volume: &FeatureVolume, mixing: &DMatrix<f64>) -> Result<FeatureImage> {
    let [nx, ny, nz] = volume.dims();
    let folded = volume.channels() * nz;
    if mixing.ncols() != folded {
        return Err(Error::ShapeMismatch(format!(
            "mixing has {} columns, volume folds to {folded} channels",
            mixing.ncols()
        )));
    }
    let pixels = nx * ny;
    let src = volume.data();
    let mut out = FeatureImage::zeros(mixing.nrows(), nx, ny);
    for o in 0..mixing.nrows() {
        let dst = &mut out.data[o * pixels..(o + 1) * pixels];
        for f in 0..folded {
            let w = mixing[(o, f)];
            if w == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(&src[f * pixels..(f + 1) * pixels]) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}
