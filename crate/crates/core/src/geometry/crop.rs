//! Viewport crop + resample for RGB, masks and depth.
//!
//! Output sample `(a, b)` reads the source at the continuous image point
//! `(u- + (a+0.5)/w * (u+ - u-), v- + (b+0.5)/h * (v+ - v-))`. Reads outside the
//! source return the pad value `0`.

use super::camera::{PixelGrid, Viewport};
use crate::error::{Error, Result};
use crate::raster::{Blend, DepthMap, Mask, Raster, RgbImage};

fn check_viewport(viewport: &Viewport, out_w: usize, out_h: usize) -> Result<()> {
    if !(viewport.width() >= 1.0 && viewport.height() >= 1.0) || out_w == 0 || out_h == 0 {
        return Err(Error::EmptyViewport {
            width: viewport.width(),
            height: viewport.height(),
        });
    }
    Ok(())
}

/// Bilinear read at continuous image coordinates with zero padding.
#[inline]
pub fn sample_bilinear<T: Blend>(img: &Raster<T>, u: f64, v: f64) -> T {
    let px = u - 0.5;
    let py = v - 0.5;
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let read = |x: i64, y: i64| img.get_checked(x, y).unwrap_or_else(T::zero);
    let top = read(x0, y0) * (1.0 - fx) + read(x0 + 1, y0) * fx;
    let bottom = read(x0, y0 + 1) * (1.0 - fx) + read(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Value of the pixel containing `(u, v)`, or `0` outside the raster.
#[inline]
pub fn sample_nearest(img: &Raster<f64>, u: f64, v: f64) -> f64 {
    img.get_checked(u.floor() as i64, v.floor() as i64)
        .unwrap_or(0.0)
}

/// Bilinear depth read that ignores invalid (`<= 0`) neighbours and renormalizes;
/// returns `0` when no neighbour is valid.
#[inline]
pub fn sample_depth(depth: &DepthMap, u: f64, v: f64) -> f64 {
    let px = u - 0.5;
    let py = v - 0.5;
    let x0 = px.floor();
    let y0 = py.floor();
    let fx = px - x0;
    let fy = py - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (dx, dy, w) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if w == 0.0 {
            continue;
        }
        if let Some(d) = depth.get_checked(x0 + dx, y0 + dy) {
            if d > 0.0 {
                acc += w * d;
                wsum += w;
            }
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

fn resample_with<T: Copy>(
    grid: &PixelGrid,
    mut read: impl FnMut(f64, f64) -> T,
) -> Result<Raster<T>> {
    check_viewport(&grid.viewport, grid.width, grid.height)?;
    Ok(Raster::from_fn(grid.width, grid.height, |a, b| {
        let (u, v) = grid.pixel_center(a, b);
        read(u, v)
    }))
}

pub fn resample_rgb(img: &RgbImage, grid: &PixelGrid) -> Result<RgbImage> {
    let src = img.to_blendable();
    Ok(resample_with(grid, |u, v| sample_bilinear(&src, u, v))?.to_rgb())
}

pub fn resample_scalar(img: &Raster<f64>, grid: &PixelGrid) -> Result<Raster<f64>> {
    resample_with(grid, |u, v| sample_bilinear(img, u, v))
}

pub fn resample_mask(mask: &Mask, grid: &PixelGrid) -> Result<Mask> {
    resample_with(grid, |u, v| sample_nearest(mask, u, v))
}

pub fn resample_depth(depth: &DepthMap, grid: &PixelGrid) -> Result<DepthMap> {
    resample_with(grid, |u, v| sample_depth(depth, u, v))
}

/// Typed dispatch for [`crop_resample`].
pub enum RasterKind<'a> {
    Rgb(&'a RgbImage),
    Mask(&'a Mask),
    Depth(&'a DepthMap),
}

pub enum Resampled {
    Rgb(RgbImage),
    Mask(Mask),
    Depth(DepthMap),
}

/// Crops `viewport` and resamples it to `out_size x out_size`: bilinear for RGB,
/// nearest for masks, validity-aware bilinear for depth.
pub fn crop_resample(src: RasterKind<'_>, viewport: &Viewport, out_size: usize) -> Result<Resampled> {
    let grid = PixelGrid::square(*viewport, out_size);
    Ok(match src {
        RasterKind::Rgb(img) => Resampled::Rgb(resample_rgb(img, &grid)?),
        RasterKind::Mask(m) => Resampled::Mask(resample_mask(m, &grid)?),
        RasterKind::Depth(d) => Resampled::Depth(resample_depth(d, &grid)?),
    })
}
