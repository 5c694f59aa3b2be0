use crate::error::{Error, Result};
use crate::geometry::CameraParams;
use crate::raster::{DepthMap, Mask, RgbImage};

/// One posed observation `x = {I, M, D}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedView {
    pub image: RgbImage,
    pub mask: Mask,
    pub depth: DepthMap,
    pub camera: CameraParams,
}

impl ObservedView {
    pub fn new(image: RgbImage, mask: Mask, depth: DepthMap, camera: CameraParams) -> Result<Self> {
        let view = Self {
            image,
            mask,
            depth,
            camera,
        };
        view.validate()?;
        Ok(view)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.image.same_shape(&self.mask) || !self.image.same_shape(&self.depth) {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{}, mask {}x{}, depth {}x{}",
                self.image.width(),
                self.image.height(),
                self.mask.width(),
                self.mask.height(),
                self.depth.width(),
                self.depth.height()
            )));
        }
        let k = &self.camera.intrinsics;
        if k.width != self.image.width() || k.height != self.image.height() {
            return Err(Error::ShapeMismatch(format!(
                "intrinsics are {}x{} but the image is {}x{}",
                k.width,
                k.height,
                self.image.width(),
                self.image.height()
            )));
        }
        k.validate()?;
        if self.mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::ShapeMismatch("mask is not binary".into()));
        }
        if self.depth.data().iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::ShapeMismatch("depth has negative or non-finite entries".into()));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Pixel bounding box `(x_min, y_min, x_max, y_max)` of the mask, inclusive.
    pub fn mask_bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height() {
            for x in 0..self.width() {
                if self.mask.get(x, y) > 0.5 {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }
}
