use std::sync::Arc;

use nalgebra::{RowVector3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{loss_depth, loss_iou, loss_mask, loss_volume_l1};
use crate::error::{Error, Result};
use crate::geometry::{
    resample_depth, resample_mask, zoom_viewport, PixelGrid, Viewport, DEFAULT_ZOOM_DISTANCE,
};
use crate::modeling::{FrustumSpec, ObservedView, ViewEncoder};
use crate::raster::{DepthMap, Mask};
use crate::rendering::{
    camera_volume, camera_volume_backward, camera_volume_scatter, render_backward, render_volume,
    PoseGradient, PoseParams, RenderSetup, TransmittanceDecoder, VolumeDecoder, POSE_DIM,
};
use crate::voxels::{resample_rigid, FeatureVolume, GridCursor, TrilinearStencil, VolumeFrame};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_latent: f64,
    pub gamma_mask: f64,
    pub eta_iou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_latent: 0.1,
            gamma_mask: 1.0,
            eta_iou: 1.0,
        }
    }
}

impl LossWeights {
    pub fn depth_only() -> Self {
        Self {
            lambda_latent: 0.0,
            gamma_mask: 0.0,
            eta_iou: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda_latent, self.gamma_mask, self.eta_iou]
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidConfig(format!("loss weights {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossOptions {
    pub gradient: bool,
    /// Treat the re-oriented query volume as a constant.
    pub freeze_query: bool,
}

impl LossOptions {
    pub fn value() -> Self {
        Self::default()
    }

    pub fn with_gradient() -> Self {
        Self {
            gradient: true,
            freeze_query: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub depth: f64,
    pub mask: f64,
    pub iou: f64,
    pub latent: f64,
    pub total: f64,
    /// Over `(omega, t, c)`; present when requested.
    pub gradient: Option<PoseGradient>,
}

/// Everything about one query that stays fixed while its pose is optimized:
/// the observation resampled onto a fixed target grid and, for the latent
/// term, the query encoded once into a camera-frame volume.
#[derive(Clone)]
pub struct QueryContext {
    pub setup: RenderSetup,
    pub observed_depth: DepthMap,
    pub observed_mask: Mask,
    pub query_volume: Option<FeatureVolume>,
    pub decoder: Arc<dyn VolumeDecoder>,
    /// Meters per unit of the depth term; the object diameter makes it scale free.
    pub depth_unit: f64,
}

impl std::fmt::Debug for QueryContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueryContext")
            .field("setup", &self.setup)
            .field("query_volume", &self.query_volume.as_ref().map(|v| v.dims()))
            .finish()
    }
}

impl QueryContext {
    /// Target grid: `size x size` over the zoom viewport around `anchor`, the
    /// camera-frame object position guess.
    pub fn new(
        query: &ObservedView,
        anchor: &Vector3<f64>,
        radius: f64,
        size: usize,
        depth_bins: usize,
    ) -> Result<Self> {
        let k = query.camera.intrinsics;
        let viewport = zoom_viewport(&k, anchor, 2.0 * radius, DEFAULT_ZOOM_DISTANCE)?;
        Ok(Self::on_grid(query, PixelGrid::square(viewport, size), depth_bins)?.with_depth_unit(2.0 * radius))
    }

    pub fn on_grid(query: &ObservedView, target: PixelGrid, depth_bins: usize) -> Result<Self> {
        let setup = RenderSetup {
            intrinsics: query.camera.intrinsics,
            target,
            lateral: target.width.max(target.height),
            depth_bins,
        };
        Ok(Self {
            setup,
            observed_depth: resample_depth(&query.depth, &target)?,
            observed_mask: resample_mask(&query.mask, &target)?,
            query_volume: None,
            decoder: Arc::new(TransmittanceDecoder),
            depth_unit: 1.0,
        })
    }

    pub fn with_depth_unit(mut self, meters: f64) -> Self {
        self.depth_unit = meters;
        self
    }

    /// Encodes the query into the frustum around `anchor` for the latent term.
    pub fn with_encoded_query(
        mut self,
        query: &ObservedView,
        encoder: &dyn ViewEncoder,
        anchor: &Vector3<f64>,
        radius: f64,
        frustum_dims: [usize; 3],
    ) -> Result<Self> {
        let spec = FrustumSpec::around(&query.camera.intrinsics, anchor, radius, frustum_dims)?;
        self.query_volume = Some(encoder.encode_volume(query, &spec)?);
        Ok(self)
    }

    pub fn with_query_volume(mut self, volume: FeatureVolume) -> Self {
        self.query_volume = Some(volume);
        self
    }

    pub fn with_decoder(mut self, decoder: Arc<dyn VolumeDecoder>) -> Self {
        self.decoder = decoder;
        self
    }

    pub fn target_viewport(&self) -> Viewport {
        self.setup.target.viewport
    }
}

/// The query volume carried into the latent's cube under `pose`.
pub fn query_in_object(query: &FeatureVolume, pose: &PoseParams, cube: &VolumeFrame, dims: [usize; 3]) -> FeatureVolume {
    resample_rigid(query, &pose.transform().inverse(), cube, dims)
}

/// `sum adj * d query_in_object / d theta` through the query sampling points.
fn query_in_object_backward(
    query: &FeatureVolume,
    pose: &PoseParams,
    cube: &VolumeFrame,
    dims: [usize; 3],
    adj: &[f64],
) -> PoseGradient {
    const CHUNK: usize = 2048;
    let rot = pose.jacobian();
    let t = pose.translation;
    let n = dims[0] * dims[1] * dims[2];
    let parts: Vec<PoseGradient> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut g = [0.0; POSE_DIM];
            let mut cur = GridCursor::at(dims, chunk * CHUNK);
            for idx in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let (i, j, k) = (cur.i, cur.j, cur.k);
                cur.advance();
                if (0..query.channels()).all(|c| adj[c * n + idx] == 0.0) {
                    continue;
                }
                let x = cube.voxel_center(dims, i, j, k);
                let p = rot.matrix * x + t;
                let (gq, jq) = query.frame().to_grid(query.dims(), &p);
                let st = TrilinearStencil::new(query.dims(), &gq);
                let mut row = RowVector3::zeros();
                for c in 0..query.channels() {
                    let a = adj[c * n + idx];
                    if a != 0.0 {
                        row += RowVector3::from(st.gradient(query.channel(c))) * a;
                    }
                }
                let row = row * jq;
                for m in 0..3 {
                    g[m] += row.dot(&(rot.partials[m] * x).transpose());
                }
                for a in 0..3 {
                    g[3 + a] += row[a];
                }
            }
            g
        })
        .collect();
    crate::rendering::sum_gradients(&parts)
}

fn add_into(g: &mut PoseGradient, other: &PoseGradient, scale: f64) {
    for (a, b) in g.iter_mut().zip(other) {
        *a += scale * b;
    }
}

/// Latent term `|H(G(query)) - H(Psi)|_1` at `pose`, given `H(Psi)` already
/// rendered. Returns the value and, when asked, its pose gradient.
fn latent_term(
    ctx: &QueryContext,
    latent: &FeatureVolume,
    latent_camera: &FeatureVolume,
    pose: &PoseParams,
    options: &LossOptions,
) -> Result<(f64, Option<PoseGradient>)> {
    let query = ctx
        .query_volume
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("latent loss needs an encoded query".into()))?;
    let g = query_in_object(query, pose, latent.frame(), latent.dims());
    let g_camera = camera_volume(&g, pose, &ctx.setup)?;
    let lv = loss_volume_l1(latent_camera, &g_camera)?;
    if !options.gradient {
        return Ok((lv.value, None));
    }
    // the backward pass is linear in the cube, so both resampling paths share one pass
    let mut diff = latent.clone();
    diff.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a -= b);
    let mut grad = camera_volume_backward(&diff, pose, &ctx.setup, &lv.gradient)?;
    if !options.freeze_query {
        let neg: Vec<f64> = lv.gradient.iter().map(|v| -v).collect();
        let adj_g = camera_volume_scatter(&g, pose, &ctx.setup, &neg)?;
        add_into(
            &mut grad,
            &query_in_object_backward(query, pose, latent.frame(), latent.dims(), &adj_g),
            1.0,
        );
    }
    Ok((lv.value, Some(grad)))
}

/// `L_depth + lambda L_latent + gamma L_mask + eta L_iou` at `pose`.
pub fn total_loss(
    ctx: &QueryContext,
    latent: &FeatureVolume,
    pose: &PoseParams,
    weights: &LossWeights,
    options: &LossOptions,
) -> Result<LossBreakdown> {
    let out = render_volume(latent, pose, &ctx.setup, ctx.decoder.as_ref())?;
    let mut ld = loss_depth(&out.depth, &ctx.observed_depth, &ctx.observed_mask)?;
    ld.value /= ctx.depth_unit;
    ld.gradient.iter_mut().for_each(|g| *g /= ctx.depth_unit);
    let lm = loss_mask(&out.mask, &ctx.observed_mask)?;
    let li = loss_iou(&out.mask, &ctx.observed_mask)?;
    let (latent_value, latent_grad) = if weights.lambda_latent > 0.0 {
        latent_term(ctx, latent, &out.camera_volume, pose, options)?
    } else {
        (0.0, None)
    };
    let total = ld.value
        + weights.lambda_latent * latent_value
        + weights.gamma_mask * lm.value
        + weights.eta_iou * li.value;
    let gradient = if options.gradient {
        let d_mask: Vec<f64> = lm
            .gradient
            .iter()
            .zip(&li.gradient)
            .map(|(a, b)| weights.gamma_mask * a + weights.eta_iou * b)
            .collect();
        let mut g = render_backward(latent, pose, &ctx.setup, ctx.decoder.as_ref(), &out, &ld.gradient, &d_mask)?;
        if let Some(lg) = latent_grad {
            add_into(&mut g, &lg, weights.lambda_latent);
        }
        Some(g)
    } else {
        None
    };
    Ok(LossBreakdown {
        depth: ld.value,
        mask: lm.value,
        iou: li.value,
        latent: latent_value,
        total,
        gradient,
    })
}
