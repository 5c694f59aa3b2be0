//! Rigid resampling between frames: `out(x') = src(W^-1 x')`.

use nalgebra::{Matrix3, Matrix3x6, Vector3};
use rayon::prelude::*;

use super::sample::TrilinearStencil;
use super::volume::{FeatureVolume, VolumeFrame};
use crate::geometry::{RigidTransform, RotationJacobian};

#[inline]
fn stencil_at(src: &FeatureVolume, inv: &RigidTransform, dst_frame: &VolumeFrame, dst_dims: [usize; 3], idx: usize) -> TrilinearStencil {
    let [nx, ny, _] = dst_dims;
    let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
    let x = dst_frame.voxel_center(dst_dims, i, j, k);
    let (g, _) = src.frame().to_grid(src.dims(), &inv.apply(&x));
    TrilinearStencil::new(src.dims(), &g)
}

fn stencils(
    src: &FeatureVolume,
    transform: &RigidTransform,
    dst_frame: &VolumeFrame,
    dst_dims: [usize; 3],
) -> Vec<TrilinearStencil> {
    let inv = transform.inverse();
    let [nx, ny, nz] = dst_dims;
    (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| stencil_at(src, &inv, dst_frame, dst_dims, idx))
        .collect()
}

/// Resamples `src` into `dst_frame`, where `transform` maps source-frame
/// coordinates to destination-frame coordinates.
pub fn resample_rigid(
    src: &FeatureVolume,
    transform: &RigidTransform,
    dst_frame: &VolumeFrame,
    dst_dims: [usize; 3],
) -> FeatureVolume {
    let mut out = FeatureVolume::zeros(src.channels(), dst_dims, *dst_frame);
    if src.channels() == 1 {
        // no stencil buffer for the common single-channel case
        let inv = transform.inverse();
        let ch = src.channel(0);
        let [nx, ny, _] = dst_dims;
        out.data_mut().par_chunks_mut(nx * ny).enumerate().for_each(|(k, slice)| {
            for (j, row) in slice.chunks_mut(nx).enumerate() {
                for (i, d) in row.iter_mut().enumerate() {
                    let x = dst_frame.voxel_center(dst_dims, i, j, k);
                    let (g, _) = src.frame().to_grid(src.dims(), &inv.apply(&x));
                    *d = TrilinearStencil::new(src.dims(), &g).value(ch);
                }
            }
        });
        return out;
    }
    let st = stencils(src, transform, dst_frame, dst_dims);
    let n = st.len();
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(c, dst)| {
            let ch = src.channel(c);
            for (d, s) in dst.iter_mut().zip(&st) {
                *d = s.value(ch);
            }
        });
    out
}

/// [`resample_rigid`] plus, for every output entry (same order as the volume
/// data), the partials with respect to `(omega, t)` of `transform`, where the
/// rotation is `exp(omega)` evaluated at `omega = log(transform.rotation)`.
pub fn resample_rigid_with_jacobian(
    src: &FeatureVolume,
    transform: &RigidTransform,
    dst_frame: &VolumeFrame,
    dst_dims: [usize; 3],
) -> (FeatureVolume, Vec<[f64; 6]>) {
    let rot = RotationJacobian::absolute(&transform.log_rotation());
    let t = transform.translation;
    let [nx, ny, nz] = dst_dims;
    let per_voxel: Vec<(TrilinearStencil, Matrix3x6<f64>)> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            let x = dst_frame.voxel_center(dst_dims, i, j, k);
            let (p, dp) = inverse_point_jacobian(&rot, &x, &t);
            let (g, jg) = src.frame().to_grid(src.dims(), &p);
            (TrilinearStencil::new(src.dims(), &g), jg * dp)
        })
        .collect();
    let n = per_voxel.len();
    let mut out = FeatureVolume::zeros(src.channels(), dst_dims, *dst_frame);
    let mut jac = vec![[0.0; 6]; n * src.channels()];
    out.data_mut()
        .par_chunks_mut(n)
        .zip(jac.par_chunks_mut(n))
        .enumerate()
        .for_each(|(c, (dst, dj))| {
            let ch = src.channel(c);
            for ((d, j), (s, chain)) in dst.iter_mut().zip(dj.iter_mut()).zip(&per_voxel) {
                *d = s.value(ch);
                let gv = Vector3::from(s.gradient(ch));
                let row = gv.transpose() * chain;
                *j = std::array::from_fn(|a| row[a]);
            }
        });
    (out, jac)
}

/// `d p / d (omega, t)` for `p = R^T (x - t)` with `R = R_chart exp(omega)`.
pub(crate) fn inverse_point_jacobian(
    rot: &RotationJacobian,
    x: &Vector3<f64>,
    t: &Vector3<f64>,
) -> (Vector3<f64>, Matrix3x6<f64>) {
    let rt: Matrix3<f64> = rot.matrix.transpose();
    let d = x - t;
    let mut dp = Matrix3x6::zeros();
    for m in 0..3 {
        dp.set_column(m, &(rot.partials[m].transpose() * d));
    }
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-rt));
    (rt * d, dp)
}
