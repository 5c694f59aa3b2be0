//! Trilinear sampling with edge padding and exact piecewise-linear partials.

use nalgebra::Vector3;

use super::volume::FeatureVolume;

/// One axis of a trilinear stencil.
#[derive(Clone, Copy, Debug)]
struct AxisStencil {
    lo: usize,
    hi: usize,
    frac: f64,
    /// Scale on the partial; `0` inside the clamped (padded) region.
    slope: f64,
}

#[inline]
fn axis_stencil(g: f64, n: usize) -> AxisStencil {
    if n == 1 {
        return AxisStencil {
            lo: 0,
            hi: 0,
            frac: 0.0,
            slope: 0.0,
        };
    }
    let last = (n - 1) as f64;
    if g < 0.0 {
        AxisStencil {
            lo: 0,
            hi: 1,
            frac: 0.0,
            slope: 0.0,
        }
    } else if g >= last {
        AxisStencil {
            lo: n - 2,
            hi: n - 1,
            frac: 1.0,
            slope: if g == last { 1.0 } else { 0.0 },
        }
    } else {
        let lo = g.floor() as usize;
        AxisStencil {
            lo,
            hi: lo + 1,
            frac: g - lo as f64,
            slope: 1.0,
        }
    }
}

/// Precomputed eight-corner stencil for one sample point; reusable across channels.
#[derive(Clone, Copy, Debug)]
pub struct TrilinearStencil {
    /// Flat offsets of the eight corners within one channel, ordered `(dz, dy, dx)` binary.
    pub offsets: [usize; 8],
    pub weights: [f64; 8],
    fx: f64,
    fy: f64,
    fz: f64,
    slope: [f64; 3],
}

impl TrilinearStencil {
    #[inline]
    pub fn new(dims: [usize; 3], g: &Vector3<f64>) -> Self {
        let ax = axis_stencil(g.x, dims[0]);
        let ay = axis_stencil(g.y, dims[1]);
        let az = axis_stencil(g.z, dims[2]);
        let (nx, ny) = (dims[0], dims[1]);
        let mut offsets = [0usize; 8];
        let mut weights = [0.0; 8];
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let i = if dx == 0 { ax.lo } else { ax.hi };
            let j = if dy == 0 { ay.lo } else { ay.hi };
            let k = if dz == 0 { az.lo } else { az.hi };
            offsets[c] = (k * ny + j) * nx + i;
            let wx = if dx == 0 { 1.0 - ax.frac } else { ax.frac };
            let wy = if dy == 0 { 1.0 - ay.frac } else { ay.frac };
            let wz = if dz == 0 { 1.0 - az.frac } else { az.frac };
            weights[c] = wx * wy * wz;
        }
        Self {
            offsets,
            weights,
            fx: ax.frac,
            fy: ay.frac,
            fz: az.frac,
            slope: [ax.slope, ay.slope, az.slope],
        }
    }

    #[inline]
    pub fn value(&self, channel: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in 0..8 {
            acc += self.weights[c] * channel[self.offsets[c]];
        }
        acc
    }

    /// Partials of the interpolated value with respect to grid coordinates.
    #[inline]
    pub fn gradient(&self, channel: &[f64]) -> [f64; 3] {
        let v = |c: usize| channel[self.offsets[c]];
        let (fx, fy, fz) = (self.fx, self.fy, self.fz);
        // differences along x at the four (y, z) corner pairs, etc.
        let dx = (1.0 - fy) * (1.0 - fz) * (v(1) - v(0))
            + fy * (1.0 - fz) * (v(3) - v(2))
            + (1.0 - fy) * fz * (v(5) - v(4))
            + fy * fz * (v(7) - v(6));
        let dy = (1.0 - fx) * (1.0 - fz) * (v(2) - v(0))
            + fx * (1.0 - fz) * (v(3) - v(1))
            + (1.0 - fx) * fz * (v(6) - v(4))
            + fx * fz * (v(7) - v(5));
        let dz = (1.0 - fx) * (1.0 - fy) * (v(4) - v(0))
            + fx * (1.0 - fy) * (v(5) - v(1))
            + (1.0 - fx) * fy * (v(6) - v(2))
            + fx * fy * (v(7) - v(3));
        [dx * self.slope[0], dy * self.slope[1], dz * self.slope[2]]
    }

    /// Scatters `weight * adjoint` into an adjoint buffer laid out like `channel`.
    #[inline]
    pub fn scatter(&self, adjoint: f64, into: &mut [f64]) {
        for c in 0..8 {
            into[self.offsets[c]] += self.weights[c] * adjoint;
        }
    }
}

impl FeatureVolume {
    /// Interpolated feature vector at continuous grid coordinates `g` (voxel
    /// centers at integer coordinates) and its partials `d value_c / d g`.
    pub fn sample_trilinear(&self, g: &Vector3<f64>) -> (Vec<f64>, Vec<[f64; 3]>) {
        let st = TrilinearStencil::new(self.dims(), g);
        (0..self.channels())
            .map(|c| {
                let ch = self.channel(c);
                (st.value(ch), st.gradient(ch))
            })
            .unzip()
    }

    #[inline]
    pub fn sample_channel(&self, c: usize, g: &Vector3<f64>) -> f64 {
        TrilinearStencil::new(self.dims(), g).value(self.channel(c))
    }

    /// Samples at a point given in the frame's own coordinates.
    pub fn sample_at_point(&self, p: &Vector3<f64>) -> Vec<f64> {
        let (g, _) = self.frame().to_grid(self.dims(), p);
        self.sample_trilinear(&g).0
    }
}
