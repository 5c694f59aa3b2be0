//! Dense row-major 2D rasters used for images, masks and depth maps.
//!
//! Pixel `(x, y)` covers the continuous image square `[x, x+1) x [y, y+1)`;
//! its center sits at `(x + 0.5, y + 0.5)`.

use std::ops::{Add, Mul};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// RGB in `[0, 1]`.
pub type RgbImage = Raster<[f64; 3]>;
/// Scalar raster; masks hold `{0, 1}` (or soft values in `[0, 1]` for predictions).
pub type ScalarImage = Raster<f64>;
/// Depth in meters, `0` marks an invalid pixel.
pub type DepthMap = Raster<f64>;
pub type Mask = Raster<f64>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Panics when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "raster data length mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds reads return `None`.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(self.data[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Values that can be blended linearly during resampling.
pub trait Blend: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Blend for f64 {
    fn zero() -> Self {
        0.0
    }
}

/// Newtype so `[f64; 3]` can participate in [`Blend`].
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Rgb(pub [f64; 3]);

impl Add for Rgb {
    type Output = Rgb;
    fn add(self, o: Rgb) -> Rgb {
        Rgb([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Mul<f64> for Rgb {
    type Output = Rgb;
    fn mul(self, s: f64) -> Rgb {
        Rgb([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Blend for Rgb {
    fn zero() -> Self {
        Rgb([0.0; 3])
    }
}

impl RgbImage {
    pub fn to_blendable(&self) -> Raster<Rgb> {
        self.map(|p| Rgb(*p))
    }
}

impl Raster<Rgb> {
    pub fn to_rgb(&self) -> RgbImage {
        self.map(|p| p.0)
    }
}

impl Mask {
    pub fn count_positive(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }
}
