use crate::error::{Error, Result};
use crate::raster::{DepthMap, Mask, Raster};
use crate::voxels::{FeatureVolume, VolumeFrame};

/// Visibility mass below which a ray reports no depth.
pub const EPS_VIS: f64 = 1e-4;

/// Depth and mask for every pixel of a ray stack.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub depth: DepthMap,
    pub mask: Mask,
}

/// Turns a camera-frame volume (one ray per `(x, y)` column, slices along z)
/// into depth and mask, with exact reverse-mode partials.
pub trait VolumeDecoder: Send + Sync {
    fn decode(&self, rays: &FeatureVolume) -> Result<Decoded>;

    /// Adjoints of the ray-stack entries and of the frame's `z_center` given
    /// adjoints of depth and mask.
    fn backward(&self, rays: &FeatureVolume, d_depth: &[f64], d_mask: &[f64]) -> Result<RayAdjoint>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayAdjoint {
    pub values: Vec<f64>,
    pub z_center: f64,
}

/// Front-to-back alpha compositing of channel 0 read as occupancy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransmittanceDecoder;

fn slice_depths(rays: &FeatureVolume) -> Result<Vec<f64>> {
    match *rays.frame() {
        VolumeFrame::CameraFrustum { z_center, radius, .. } => {
            let nz = rays.dims()[2];
            Ok((0..nz)
                .map(|k| z_center - radius + (k as f64 + 0.5) / nz as f64 * 2.0 * radius)
                .collect())
        }
        VolumeFrame::CanonicalCube { .. } => Err(Error::ShapeMismatch(
            "decoding needs a camera-frustum volume".into(),
        )),
    }
}

/// Single-ray compositing: returns `(depth, mask)`.
pub fn composite(occupancy: &[f64], z: &[f64]) -> (f64, f64) {
    let mut transmit = 1.0;
    let mut acc = 0.0;
    for (o, zk) in occupancy.iter().zip(z) {
        let o = o.clamp(0.0, 1.0);
        acc += o * transmit * zk;
        transmit *= 1.0 - o;
    }
    let mass = 1.0 - transmit;
    (if mass > EPS_VIS { acc / mass } else { 0.0 }, mass)
}

/// Partials of `(depth, mask)` of one ray with respect to its raw occupancies.
pub fn composite_partials(occupancy: &[f64], z: &[f64], d_depth: &mut [f64], d_mask: &mut [f64]) {
    let n = occupancy.len();
    let o: Vec<f64> = occupancy.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut t = vec![1.0; n + 1];
    for k in 0..n {
        t[k + 1] = t[k] * (1.0 - o[k]);
    }
    let mass = 1.0 - t[n];
    let acc: f64 = (0..n).map(|k| o[k] * t[k] * z[k]).sum();
    let depth = if mass > EPS_VIS { acc / mass } else { 0.0 };
    // suffix quantities: transmittance behind k and the depth mass behind k
    let mut behind_t = 1.0;
    let mut behind_a = 0.0;
    for k in (0..n).rev() {
        let pass = if (0.0..=1.0).contains(&occupancy[k]) { 1.0 } else { 0.0 };
        let ds = t[k] * behind_t;
        let da = t[k] * (z[k] - behind_a);
        d_mask[k] = pass * ds;
        d_depth[k] = if mass > EPS_VIS {
            pass * (da - depth * ds) / mass
        } else {
            0.0
        };
        behind_a = o[k] * z[k] + (1.0 - o[k]) * behind_a;
        behind_t *= 1.0 - o[k];
    }
}

impl VolumeDecoder for TransmittanceDecoder {
    fn decode(&self, rays: &FeatureVolume) -> Result<Decoded> {
        let z = slice_depths(rays)?;
        let [nx, ny, nz] = rays.dims();
        let ch = rays.channel(0);
        let plane = nx * ny;
        let mut depth = Vec::with_capacity(plane);
        let mut mask = Vec::with_capacity(plane);
        let mut ray = vec![0.0; nz];
        for p in 0..plane {
            for (k, r) in ray.iter_mut().enumerate() {
                *r = ch[k * plane + p];
            }
            let (d, m) = composite(&ray, &z);
            depth.push(d);
            mask.push(m);
        }
        Ok(Decoded {
            depth: Raster::from_vec(nx, ny, depth),
            mask: Raster::from_vec(nx, ny, mask),
        })
    }

    fn backward(&self, rays: &FeatureVolume, d_depth: &[f64], d_mask: &[f64]) -> Result<RayAdjoint> {
        let z = slice_depths(rays)?;
        let [nx, ny, nz] = rays.dims();
        let plane = nx * ny;
        if d_depth.len() != plane || d_mask.len() != plane {
            return Err(Error::ShapeMismatch("adjoint size differs from the ray grid".into()));
        }
        let ch = rays.channel(0);
        let mut out = vec![0.0; rays.data().len()];
        let mut ray = vec![0.0; nz];
        let mut pd = vec![0.0; nz];
        let mut pm = vec![0.0; nz];
        let mut z_center = 0.0;
        for p in 0..plane {
            if d_depth[p] == 0.0 && d_mask[p] == 0.0 {
                continue;
            }
            for (k, r) in ray.iter_mut().enumerate() {
                *r = ch[k * plane + p];
            }
            // every slice depth follows z_center, so a visible depth does too
            if composite(&ray, &z).1 > EPS_VIS {
                z_center += d_depth[p];
            }
            composite_partials(&ray, &z, &mut pd, &mut pm);
            for k in 0..nz {
                out[k * plane + p] = d_depth[p] * pd[k] + d_mask[p] * pm[k];
            }
        }
        Ok(RayAdjoint { values: out, z_center })
    }
}
