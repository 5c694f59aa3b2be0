//! Differentiable latent rendering.
//!
//! The latent cube is resampled into the frustum of the pose viewport
//! (`camera volume`), which is read out bilinearly at the pixel centers of a
//! target grid and decoded ray by ray. The target grid is independent of the
//! pose, so the viewport stays a smooth parameter of the rendered image.

use nalgebra::{Matrix3, RowVector3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decoder::{Decoded, VolumeDecoder};
use crate::error::{Error, Result};
use crate::geometry::{
    CameraIntrinsics, CameraParams, LogQuaternion, PixelGrid, RigidTransform, RotationJacobian,
    Viewport,
};
use crate::raster::{DepthMap, Mask};
use crate::voxels::{inverse_point_jacobian, resample_rigid, FeatureVolume, GridCursor, TrilinearStencil, VolumeFrame};

/// Number of pose parameters: rotation increment, translation, viewport.
pub const POSE_DIM: usize = 10;

pub type PoseGradient = [f64; POSE_DIM];

const CHUNK: usize = 2048;

/// Pose `theta = (R_chart exp(omega), t, c)` in the optimizer's local chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub chart: UnitQuaternion<f64>,
    pub omega: Vector3<f64>,
    pub translation: Vector3<f64>,
    pub viewport: Viewport,
}

impl PoseParams {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, viewport: Viewport) -> Self {
        Self {
            chart: rotation,
            omega: Vector3::zeros(),
            translation,
            viewport,
        }
    }

    pub fn from_camera(camera: &CameraParams) -> Self {
        Self::new(camera.extrinsics.rotation, camera.extrinsics.translation, camera.viewport)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.chart * crate::geometry::quat_exp(&LogQuaternion(self.omega))
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(self.rotation(), self.translation)
    }

    pub fn camera(&self, intrinsics: CameraIntrinsics) -> CameraParams {
        CameraParams::new(intrinsics, self.transform(), self.viewport)
    }

    pub fn jacobian(&self) -> RotationJacobian {
        RotationJacobian::new(&self.chart, &LogQuaternion(self.omega))
    }

    /// Folds `omega` into the chart.
    pub fn recentered(&self) -> Self {
        Self::new(self.rotation(), self.translation, self.viewport)
    }

    pub fn to_vector(&self) -> [f64; POSE_DIM] {
        let c = self.viewport.to_array();
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
            c[0],
            c[1],
            c[2],
            c[3],
        ]
    }

    pub fn with_vector(&self, v: &[f64; POSE_DIM]) -> Self {
        Self {
            chart: self.chart,
            omega: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
            viewport: Viewport::from_array([v[6], v[7], v[8], v[9]]),
        }
    }
}

/// Where and how finely a latent is rendered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSetup {
    pub intrinsics: CameraIntrinsics,
    /// Pixel centers at which the image is formed.
    pub target: PixelGrid,
    /// Lateral samples of the camera volume, per axis.
    pub lateral: usize,
    /// Depth slices `M`.
    pub depth_bins: usize,
}

impl RenderSetup {
    /// Renders straight onto the pose viewport at `size x size`.
    pub fn crop(intrinsics: CameraIntrinsics, viewport: Viewport, size: usize, depth_bins: usize) -> Self {
        Self {
            intrinsics,
            target: PixelGrid::square(viewport, size),
            lateral: size,
            depth_bins,
        }
    }

    pub fn camera_dims(&self) -> [usize; 3] {
        [self.lateral, self.lateral, self.depth_bins]
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub depth: DepthMap,
    pub mask: Mask,
    /// Latent resampled into the pose viewport frustum, `[lateral, lateral, M]`.
    pub camera_volume: FeatureVolume,
    /// Camera volume read out at the target pixels, `[width, height, M]`.
    pub rays: FeatureVolume,
}

/// Frustum of the pose viewport bracketing the object depth `t_z +- radius`.
pub fn pose_frame(intrinsics: &CameraIntrinsics, pose: &PoseParams, radius: f64) -> Result<VolumeFrame> {
    let frame = VolumeFrame::CameraFrustum {
        intrinsics: *intrinsics,
        viewport: pose.viewport,
        z_center: pose.translation.z,
        radius,
    };
    frame.validate()?;
    Ok(frame)
}

/// Frame of the ray stack: same depth band, target viewport.
fn ray_frame(camera_frame: &VolumeFrame, target: &PixelGrid) -> VolumeFrame {
    match *camera_frame {
        VolumeFrame::CameraFrustum {
            intrinsics,
            z_center,
            radius,
            ..
        } => VolumeFrame::CameraFrustum {
            intrinsics,
            viewport: target.viewport,
            z_center,
            radius,
        },
        other => other,
    }
}

fn viewport_of(frame: &VolumeFrame) -> Result<Viewport> {
    match frame {
        VolumeFrame::CameraFrustum { viewport, .. } => Ok(*viewport),
        _ => Err(Error::ShapeMismatch("expected a camera-frustum volume".into())),
    }
}

/// Resamples a cube volume into the frustum of `pose`.
pub fn camera_volume(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
) -> Result<FeatureVolume> {
    let frame = pose_frame(&setup.intrinsics, pose, cube.frame().radius())?;
    Ok(resample_rigid(cube, &pose.transform(), &frame, setup.camera_dims()))
}

/// Continuous camera-volume lateral coordinates of the target pixel centers.
fn readout_coords(vp: &Viewport, n: [usize; 2], target: &PixelGrid) -> (Vec<f64>, Vec<f64>) {
    let a = (0..target.width)
        .map(|x| (target.viewport.u_sample(x, target.width) - vp.u_minus) / vp.width() * n[0] as f64 - 0.5)
        .collect();
    let b = (0..target.height)
        .map(|y| (target.viewport.v_sample(y, target.height) - vp.v_minus) / vp.height() * n[1] as f64 - 0.5)
        .collect();
    (a, b)
}

/// Bilinear corners along one axis with zero padding: `(i0, w0, i1, w1)`,
/// an index of `usize::MAX` marking a padded neighbour.
#[inline]
fn axis_corners(a: f64, n: usize) -> (usize, f64, usize, f64) {
    let a0 = a.floor();
    let f = a - a0;
    let i0 = a0 as i64;
    let idx = |i: i64| if i >= 0 && (i as usize) < n { i as usize } else { usize::MAX };
    (idx(i0), 1.0 - f, idx(i0 + 1), f)
}

/// Reads the camera volume out at the target pixel centers (zero outside).
pub fn read_out(camera: &FeatureVolume, target: &PixelGrid) -> Result<FeatureVolume> {
    let vp = viewport_of(camera.frame())?;
    let [nx, ny, nz] = camera.dims();
    let (tw, th) = (target.width, target.height);
    let (ax, by) = readout_coords(&vp, [nx, ny], target);
    let cx: Vec<_> = ax.iter().map(|&a| axis_corners(a, nx)).collect();
    let cy: Vec<_> = by.iter().map(|&b| axis_corners(b, ny)).collect();
    let mut out = FeatureVolume::zeros(camera.channels(), [tw, th, nz], ray_frame(camera.frame(), target));
    let src_plane = nx * ny;
    let dst_plane = tw * th;
    out.data_mut()
        .par_chunks_mut(dst_plane)
        .enumerate()
        .for_each(|(slab, dst)| {
            let src = &camera.data()[slab * src_plane..(slab + 1) * src_plane];
            for (y, &(y0, wy0, y1, wy1)) in cy.iter().enumerate() {
                for (x, &(x0, wx0, x1, wx1)) in cx.iter().enumerate() {
                    let mut v = 0.0;
                    for (yy, wy) in [(y0, wy0), (y1, wy1)] {
                        if yy == usize::MAX {
                            continue;
                        }
                        for (xx, wx) in [(x0, wx0), (x1, wx1)] {
                            if xx != usize::MAX {
                                v += wx * wy * src[yy * nx + xx];
                            }
                        }
                    }
                    dst[y * tw + x] = v;
                }
            }
        });
    Ok(out)
}

/// Adjoint of [`read_out`]: returns the camera-volume adjoint and the direct
/// partials with respect to the viewport of the camera volume.
pub fn read_out_backward(
    camera: &FeatureVolume,
    target: &PixelGrid,
    adj_rays: &[f64],
) -> Result<(Vec<f64>, [f64; 4])> {
    let vp = viewport_of(camera.frame())?;
    let [nx, ny, nz] = camera.dims();
    let (tw, th) = (target.width, target.height);
    if adj_rays.len() != camera.channels() * tw * th * nz {
        return Err(Error::ShapeMismatch("ray adjoint size".into()));
    }
    let (ax, by) = readout_coords(&vp, [nx, ny], target);
    let cx: Vec<_> = ax.iter().map(|&a| axis_corners(a, nx)).collect();
    let cy: Vec<_> = by.iter().map(|&b| axis_corners(b, ny)).collect();
    // d a / d (u-, u+) and d b / d (v-, v+) per target column / row
    let (w, h) = (vp.width(), vp.height());
    let da: Vec<[f64; 2]> = (0..tw)
        .map(|x| {
            let u = target.viewport.u_sample(x, tw);
            let s = nx as f64 / (w * w);
            [(u - vp.u_plus) * s, -(u - vp.u_minus) * s]
        })
        .collect();
    let db: Vec<[f64; 2]> = (0..th)
        .map(|y| {
            let v = target.viewport.v_sample(y, th);
            let s = ny as f64 / (h * h);
            [(v - vp.v_plus) * s, -(v - vp.v_minus) * s]
        })
        .collect();
    let src_plane = nx * ny;
    let dst_plane = tw * th;
    let mut adj = vec![0.0; camera.data().len()];
    let slabs: Vec<[f64; 4]> = adj
        .par_chunks_mut(src_plane)
        .enumerate()
        .map(|(slab, acc)| {
            let src = &camera.data()[slab * src_plane..(slab + 1) * src_plane];
            let g = &adj_rays[slab * dst_plane..(slab + 1) * dst_plane];
            let read = |xx: usize, yy: usize| {
                if xx == usize::MAX || yy == usize::MAX {
                    0.0
                } else {
                    src[yy * nx + xx]
                }
            };
            let mut dc = [0.0; 4];
            for (y, &(y0, wy0, y1, wy1)) in cy.iter().enumerate() {
                for (x, &(x0, wx0, x1, wx1)) in cx.iter().enumerate() {
                    let a = g[y * tw + x];
                    if a == 0.0 {
                        continue;
                    }
                    for (yy, wy) in [(y0, wy0), (y1, wy1)] {
                        for (xx, wx) in [(x0, wx0), (x1, wx1)] {
                            if xx != usize::MAX && yy != usize::MAX {
                                acc[yy * nx + xx] += a * wx * wy;
                            }
                        }
                    }
                    let dv_da = wy0 * (read(x1, y0) - read(x0, y0)) + wy1 * (read(x1, y1) - read(x0, y1));
                    let dv_db = wx0 * (read(x0, y1) - read(x0, y0)) + wx1 * (read(x1, y1) - read(x1, y0));
                    dc[0] += a * dv_da * da[x][0];
                    dc[2] += a * dv_da * da[x][1];
                    dc[1] += a * dv_db * db[y][0];
                    dc[3] += a * dv_db * db[y][1];
                }
            }
            dc
        })
        .collect();
    let mut dc = [0.0; 4];
    for s in &slabs {
        for (d, v) in dc.iter_mut().zip(s) {
            *d += v;
        }
    }
    Ok((adj, dc))
}

/// `sum adj * d camera_volume / d theta` for a camera volume sampled from `cube`
/// at `pose`. Accounts for the rotation, the translation (including the depth
/// band following `t_z`) and the viewport moving the frustum samples.
pub fn camera_volume_backward(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
    adj: &[f64],
) -> Result<PoseGradient> {
    let frame = pose_frame(&setup.intrinsics, pose, cube.frame().radius())?;
    let dims = setup.camera_dims();
    let n = dims[0] * dims[1] * dims[2];
    if adj.len() != n * cube.channels() {
        return Err(Error::ShapeMismatch("camera volume adjoint size".into()));
    }
    let rot = pose.jacobian();
    let rt: Matrix3<f64> = rot.matrix.transpose();
    let t = pose.translation;
    let k = &setup.intrinsics;
    let (r, nzf) = (frame.radius(), dims[2] as f64);
    let z_of = |kk: usize| pose.translation.z - r + (kk as f64 + 0.5) / nzf * 2.0 * r;
    let partial: Vec<PoseGradient> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut g = [0.0; POSE_DIM];
            let mut cur = GridCursor::at(dims, chunk * CHUNK);
            for idx in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let (i, j, kk) = (cur.i, cur.j, cur.k);
                cur.advance();
                if (0..cube.channels()).all(|c| adj[c * n + idx] == 0.0) {
                    continue;
                }
                let x = frame.voxel_center(dims, i, j, kk);
                let (p, dp) = inverse_point_jacobian(&rot, &x, &t);
                let (gc, jg) = cube.frame().to_grid(cube.dims(), &p);
                let st = TrilinearStencil::new(cube.dims(), &gc);
                let mut row = RowVector3::zeros();
                for c in 0..cube.channels() {
                    let a = adj[c * n + idx];
                    if a != 0.0 {
                        row += RowVector3::from(st.gradient(cube.channel(c))) * a;
                    }
                }
                let row = row * jg;
                let rp = row * dp;
                for m in 0..6 {
                    g[m] += rp[m];
                }
                // frustum sample x moves with t_z and with the viewport
                let rrt = row * rt;
                let z = z_of(kk);
                let dx_dtz = Vector3::new(x.x / z, x.y / z, 1.0);
                g[5] += rrt.dot(&dx_dtz.transpose());
                let fi = (i as f64 + 0.5) / dims[0] as f64;
                let fj = (j as f64 + 0.5) / dims[1] as f64;
                let du = rrt[0] * z / k.fu;
                let dv = rrt[1] * z / k.fv;
                g[6] += du * (1.0 - fi);
                g[8] += du * fi;
                g[7] += dv * (1.0 - fj);
                g[9] += dv * fj;
            }
            g
        })
        .collect();
    Ok(sum_gradients(&partial))
}

/// Adjoint of [`camera_volume`] with respect to the cube entries.
pub fn camera_volume_scatter(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
    adj: &[f64],
) -> Result<Vec<f64>> {
    let frame = pose_frame(&setup.intrinsics, pose, cube.frame().radius())?;
    let dims = setup.camera_dims();
    let n = dims[0] * dims[1] * dims[2];
    if adj.len() != n * cube.channels() {
        return Err(Error::ShapeMismatch("camera volume adjoint size".into()));
    }
    let inv = pose.transform().inverse();
    let per = cube.voxels_per_channel();
    let mut out = vec![0.0; cube.data().len()];
    let mut cur = GridCursor::at(dims, 0);
    for idx in 0..n {
        let (i, j, kk) = (cur.i, cur.j, cur.k);
        cur.advance();
        if (0..cube.channels()).all(|c| adj[c * n + idx] == 0.0) {
            continue;
        }
        let p = inv.apply(&frame.voxel_center(dims, i, j, kk));
        let (g, _) = cube.frame().to_grid(cube.dims(), &p);
        let st = TrilinearStencil::new(cube.dims(), &g);
        for c in 0..cube.channels() {
            st.scatter(adj[c * n + idx], &mut out[c * per..(c + 1) * per]);
        }
    }
    Ok(out)
}

pub(crate) fn sum_gradients(parts: &[PoseGradient]) -> PoseGradient {
    let mut g = [0.0; POSE_DIM];
    for p in parts {
        for (a, b) in g.iter_mut().zip(p) {
            *a += b;
        }
    }
    g
}

/// Renders `cube` at `pose` onto the target grid.
pub fn render_volume(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
    decoder: &dyn VolumeDecoder,
) -> Result<RenderOutput> {
    let camera = camera_volume(cube, pose, setup)?;
    let rays = read_out(&camera, &setup.target)?;
    let Decoded { depth, mask } = decoder.decode(&rays)?;
    Ok(RenderOutput {
        depth,
        mask,
        camera_volume: camera,
        rays,
    })
}

/// Pose gradient of a scalar with adjoints `d_depth`, `d_mask` on the rendered images.
pub fn render_backward(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
    decoder: &dyn VolumeDecoder,
    output: &RenderOutput,
    d_depth: &[f64],
    d_mask: &[f64],
) -> Result<PoseGradient> {
    let adj = decoder.backward(&output.rays, d_depth, d_mask)?;
    let mut g = rays_backward(cube, pose, setup, output, &adj.values)?;
    g[5] += adj.z_center;
    Ok(g)
}

/// Pose gradient given an adjoint on the ray-stack values (the ray frame's
/// own `z_center` dependence is the caller's).
pub fn rays_backward(
    cube: &FeatureVolume,
    pose: &PoseParams,
    setup: &RenderSetup,
    output: &RenderOutput,
    adj_rays: &[f64],
) -> Result<PoseGradient> {
    let (adj_cam, dc) = read_out_backward(&output.camera_volume, &setup.target, adj_rays)?;
    let mut g = camera_volume_backward(cube, pose, setup, &adj_cam)?;
    for (a, b) in g[6..].iter_mut().zip(dc) {
        *a += b;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rendering::TransmittanceDecoder;
    use crate::testutil::smooth_blobs;

    fn setup_and_pose() -> (FeatureVolume, PoseParams, RenderSetup) {
        let k = CameraIntrinsics::new(150.0, 150.0, 64.0, 64.0, 128, 128).unwrap();
        let cube = smooth_blobs(24, 0.1);
        let rot = UnitQuaternion::from_euler_angles(0.3, -0.4, 0.8);
        let t = Vector3::new(0.02, -0.015, 0.6);
        let vp = Viewport::new(34.0, 36.0, 86.0, 90.0).unwrap();
        let pose = PoseParams {
            chart: rot,
            omega: Vector3::new(0.01, -0.02, 0.015),
            translation: t,
            viewport: vp,
        };
        let target = PixelGrid::square(Viewport::new(30.0, 30.0, 94.0, 94.0).unwrap(), 40);
        let setup = RenderSetup {
            intrinsics: k,
            target,
            lateral: 32,
            depth_bins: 24,
        };
        (cube, pose, setup)
    }

    fn scalar(out: &RenderOutput, wd: &[f64], wm: &[f64]) -> f64 {
        out.depth.data().iter().zip(wd).map(|(a, b)| a * b).sum::<f64>()
            + out.mask.data().iter().zip(wm).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn pose_partials_match_central_differences() {
        let (cube, pose, setup) = setup_and_pose();
        let dec = TransmittanceDecoder;
        let out = render_volume(&cube, &pose, &setup, &dec).unwrap();
        let n = setup.target.len();
        let wd: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let wm: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.1).collect();
        let g = render_backward(&cube, &pose, &setup, &dec, &out, &wd, &wm).unwrap();
        let base = pose.to_vector();
        // tiny steps keep the stencils from crossing cell faces
        for (p, h) in [1e-6, 1e-6, 1e-6, 1e-7, 1e-7, 1e-7, 1e-6, 1e-6, 1e-6, 1e-6].iter().enumerate() {
            let mut a = base;
            let mut b = base;
            a[p] += h;
            b[p] -= h;
            let fa = scalar(&render_volume(&cube, &pose.with_vector(&a), &setup, &dec).unwrap(), &wd, &wm);
            let fb = scalar(&render_volume(&cube, &pose.with_vector(&b), &setup, &dec).unwrap(), &wd, &wm);
            let fd = (fa - fb) / (2.0 * h);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(
                (fd - g[p]).abs() <= 1e-5 * fd.abs().max(g[p].abs()).max(1e-3 * scale),
                "param {p}: analytic {} vs fd {fd}",
                g[p]
            );
        }
    }

    #[test]
    fn identity_readout_is_exact() {
        let (cube, pose, setup) = setup_and_pose();
        let crop = RenderSetup::crop(setup.intrinsics, pose.viewport, 32, 24);
        let out = render_volume(&cube, &pose, &crop, &TransmittanceDecoder).unwrap();
        assert_eq!(out.rays.data(), out.camera_volume.data());
    }

    #[test]
    fn relative_pose_invariance() {
        let (cube, pose, setup) = setup_and_pose();
        let a = render_volume(&cube, &pose, &setup, &TransmittanceDecoder).unwrap();
        // same camera-from-object transform expressed through a different chart
        let moved = PoseParams {
            chart: pose.rotation(),
            omega: Vector3::zeros(),
            ..pose
        };
        let b = render_volume(&cube, &moved, &setup, &TransmittanceDecoder).unwrap();
        for (x, y) in a.depth.data().iter().zip(b.depth.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn behind_camera_is_rejected() {
        let (cube, mut pose, setup) = setup_and_pose();
        pose.translation.z = 0.05;
        assert!(matches!(
            render_volume(&cube, &pose, &setup, &TransmittanceDecoder),
            Err(Error::ObjectBehindCamera { .. })
        ));
    }
}
