//! Image-based color: reference views reprojected through a rendered depth map
//! and blended by viewing-direction similarity.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_bilinear, CameraParams, PixelGrid, RigidTransform};
use crate::modeling::ObservedView;
use crate::raster::{DepthMap, Mask, Raster, RgbImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    pub power: f64,
    /// Depth-consistency tolerance in meters.
    pub tau_reproj: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            power: 8.0,
            tau_reproj: 0.01,
        }
    }
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0) || !(self.tau_reproj > 0.0) {
            return Err(Error::InvalidConfig(format!("blend config {self:?}")));
        }
        Ok(())
    }
}

/// One reference view carried into the output camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Reprojection {
    pub color: RgbImage,
    pub valid: Mask,
}

fn optical_axis_in_object(e: &RigidTransform) -> Vector3<f64> {
    e.rotation.inverse() * Vector3::z()
}

/// Cosine of the angle between two optical axes expressed in the object frame.
pub fn view_similarity(a: &CameraParams, b: &CameraParams) -> f64 {
    optical_axis_in_object(&a.extrinsics).dot(&optical_axis_in_object(&b.extrinsics))
}

/// Samples `reference` color at the object points seen through `depth`, which
/// lives on `output_camera`'s viewport at the raster's resolution.
pub fn reproject_color(
    output_camera: &CameraParams,
    depth: &DepthMap,
    reference: &ObservedView,
    tau_reproj: f64,
) -> Reprojection {
    let grid = PixelGrid::new(output_camera.viewport, depth.width(), depth.height());
    let to_ref = reference.camera.extrinsics.compose(&output_camera.extrinsics.inverse());
    let kr = &reference.camera.intrinsics;
    let ko = &output_camera.intrinsics;
    let (rw, rh) = (reference.width() as f64, reference.height() as f64);
    let image = reference.image.to_blendable();
    let mut color = Raster::filled(depth.width(), depth.height(), [0.0; 3]);
    let mut valid = Raster::filled(depth.width(), depth.height(), 0.0);
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let z = depth.get(x, y);
            if !(z > 0.0) {
                continue;
            }
            let (u, v) = grid.pixel_center(x, y);
            let xr = to_ref.apply(&ko.unproject_unchecked(u, v, z));
            if !(xr.z > 0.0) {
                continue;
            }
            let ur = kr.fu * xr.x / xr.z + kr.u0;
            let vr = kr.fv * xr.y / xr.z + kr.v0;
            if !(ur >= 0.0 && ur < rw && vr >= 0.0 && vr < rh) {
                continue;
            }
            let (px, py) = (ur.floor() as usize, vr.floor() as usize);
            if reference.mask.get(px, py) < 0.5 {
                continue;
            }
            let dref = reference.depth.get(px, py);
            if dref > 0.0 && (xr.z - dref).abs() > tau_reproj {
                continue;
            }
            color.set(x, y, sample_bilinear(&image, ur, vr).0);
            valid.set(x, y, 1.0);
        }
    }
    Reprojection { color, valid }
}

/// Per-pixel convex blend with weights `valid_i * max(0, s_i)^p`. Returns the
/// color and a coverage mask that is `0` where every weight vanishes.
pub fn blend_views(
    reprojections: &[Reprojection],
    similarities: &[f64],
    config: &BlendConfig,
) -> Result<(RgbImage, Mask)> {
    config.validate()?;
    let first = reprojections.first().ok_or(Error::NoViews)?;
    if similarities.len() != reprojections.len() {
        return Err(Error::ShapeMismatch("one similarity per reprojection".into()));
    }
    if reprojections
        .iter()
        .any(|r| !r.color.same_shape(&first.color) || !r.valid.same_shape(&first.color))
    {
        return Err(Error::ShapeMismatch("reprojections differ in size".into()));
    }
    let base: Vec<f64> = similarities.iter().map(|s| s.max(0.0).powf(config.power)).collect();
    let (w, h) = (first.color.width(), first.color.height());
    let mut out = Raster::filled(w, h, [0.0; 3]);
    let mut cover = Raster::filled(w, h, 0.0);
    for idx in 0..w * h {
        let mut total = 0.0;
        let mut acc = [0.0; 3];
        for (r, b) in reprojections.iter().zip(&base) {
            let wi = r.valid.data()[idx] * b;
            if wi > 0.0 {
                total += wi;
                let c = r.color.data()[idx];
                for ch in 0..3 {
                    acc[ch] += wi * c[ch];
                }
            }
        }
        if total > 0.0 {
            let mut c = [0.0; 3];
            for ch in 0..3 {
                c[ch] = acc[ch] / total;
            }
            // keep the result inside the inputs' hull despite rounding
            for ch in 0..3 {
                let (lo, hi) = reprojections
                    .iter()
                    .zip(&base)
                    .filter(|(r, b)| r.valid.data()[idx] * **b > 0.0)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (r, _)| {
                        let v = r.color.data()[idx][ch];
                        (lo.min(v), hi.max(v))
                    });
                c[ch] = c[ch].clamp(lo, hi);
            }
            out.data_mut()[idx] = c;
            cover.data_mut()[idx] = 1.0;
        }
    }
    Ok((out, cover))
}

/// Reprojects every retained view of a latent and blends them for `camera`.
pub fn render_color(
    views: &[ObservedView],
    camera: &CameraParams,
    depth: &DepthMap,
    config: &BlendConfig,
) -> Result<(RgbImage, Mask)> {
    let reps: Vec<Reprojection> = views
        .iter()
        .map(|v| reproject_color(camera, depth, v, config.tau_reproj))
        .collect();
    let sims: Vec<f64> = views.iter().map(|v| view_similarity(&v.camera, camera)).collect();
    blend_views(&reps, &sims, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rep(rng: &mut ChaCha8Rng, n: usize) -> Reprojection {
        Reprojection {
            color: Raster::from_fn(n, n, |_, _| [rng.random(), rng.random(), rng.random()]),
            valid: Raster::from_fn(n, n, |_, _| if rng.random::<f64>() < 0.8 { 1.0 } else { 0.0 }),
        }
    }

    #[test]
    fn one_view_and_equal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_rep(&mut rng, 8);
        let (out, cover) = blend_views(&[a.clone()], &[0.7], &BlendConfig::default()).unwrap();
        for i in 0..64 {
            if a.valid.data()[i] > 0.0 {
                assert_eq!(out.data()[i], a.color.data()[i]);
            }
        }
        assert_eq!(cover, a.valid);
        let mut b = random_rep(&mut rng, 8);
        b.valid = a.valid.clone();
        let (avg, _) = blend_views(&[a.clone(), b.clone()], &[0.5, 0.5], &BlendConfig::default()).unwrap();
        for i in 0..64 {
            if a.valid.data()[i] > 0.0 {
                for c in 0..3 {
                    let m = 0.5 * (a.color.data()[i][c] + b.color.data()[i][c]);
                    assert!((avg.data()[i][c] - m).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn high_power_selects_most_similar_valid_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps: Vec<_> = (0..4).map(|_| random_rep(&mut rng, 32)).collect();
        let sims = [
            30f64.to_radians().cos(),
            0f64.to_radians().cos(),
            60f64.to_radians().cos(),
            45f64.to_radians().cos(),
        ];
        let cfg = BlendConfig {
            power: 64.0,
            ..Default::default()
        };
        let (out, _) = blend_views(&reps, &sims, &cfg).unwrap();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|a, b| sims[*b].total_cmp(&sims[*a]));
        let mut same = 0;
        let mut covered = 0;
        for i in 0..32 * 32 {
            let Some(&best) = order.iter().find(|&&v| reps[v].valid.data()[i] > 0.0) else {
                continue;
            };
            covered += 1;
            let want = reps[best].color.data()[i];
            let got = out.data()[i];
            // identical up to half an 8-bit step
            if (0..3).all(|c| (want[c] - got[c]).abs() <= 0.5 / 255.0) {
                same += 1;
            }
        }
        assert!(same as f64 >= 0.99 * covered as f64, "{same} / {covered}");
    }

    proptest! {
        #[test]
        fn blend_is_convex(seed in 0u64..1000, s in prop::collection::vec(-1.0f64..1.0, 3)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reps: Vec<_> = (0..3).map(|_| random_rep(&mut rng, 6)).collect();
            let (out, cover) = blend_views(&reps, &s, &BlendConfig::default()).unwrap();
            for i in 0..36 {
                if cover.data()[i] == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    let vals = reps.iter().map(|r| r.color.data()[i][c]);
                    let lo = vals.clone().fold(f64::INFINITY, f64::min);
                    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(out.data()[i][c] >= lo && out.data()[i][c] <= hi);
                }
            }
        }
    }
}
