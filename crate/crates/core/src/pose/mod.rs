//! Two-stage pose estimation: a sampling search over the pose from a
//! translation guess, then gradient refinement of rotation, translation and
//! viewport against the rendered latent.

mod coarse;
mod gmm;
mod init;
mod refine;

use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use coarse::{coarse_estimate, coarse_modes, CoarseConfig};
pub use init::{aligned_translation, init_translation, MaskExtent};
pub use refine::{refine, refine_on, score, RefineConfig};

use crate::error::{Error, Result};
use crate::geometry::{quat_exp, quat_log_unit, zoom_viewport, CameraIntrinsics, LogQuaternion, RigidTransform, Viewport, DEFAULT_ZOOM_DISTANCE};
use crate::modeling::{LatentObject, ModelingConfig, ObservedView, OccupancyEncoder};
use crate::objective::{LossBreakdown, LossWeights, QueryContext};
use crate::rendering::PoseParams;
use crate::voxels::FeatureVolume;

/// Everything [`estimate`] needs besides the query and the latent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub weights: LossWeights,
    pub coarse: CoarseConfig,
    pub refine: RefineConfig,
    /// Side of the square target grid used during refinement.
    pub image_size: usize,
    /// Side of the target grid used by the sampling search.
    pub coarse_image_size: usize,
    /// Side of the target grid used while screening search modes.
    pub screen_image_size: usize,
    /// Encoder applied to the query for the latent term.
    pub encoder: OccupancyEncoder,
    /// Refinement iterations per screening round. With several search modes each
    /// round refines the survivors this much and drops the worse half, until one
    /// remains for the full refinement.
    pub screen_iterations: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            coarse: CoarseConfig::default(),
            refine: RefineConfig::default(),
            image_size: 64,
            coarse_image_size: 32,
            screen_image_size: 32,
            encoder: OccupancyEncoder::default(),
            screen_iterations: 30,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.coarse.validate()?;
        self.refine.validate()?;
        if self.image_size == 0 || self.coarse_image_size == 0 || self.screen_image_size == 0 {
            return Err(Error::InvalidConfig("target grid sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One query prepared against one latent: translation guess, target grids
/// and (if the latent term is on) the encoded query.
#[derive(Clone, Debug)]
pub struct PoseProblem {
    pub latent: FeatureVolume,
    pub radius: f64,
    pub intrinsics: CameraIntrinsics,
    pub initial_translation: Vector3<f64>,
    pub extent: MaskExtent,
    /// Object-frame centers of occupied latent voxels.
    pub occupied: Vec<Vector3<f64>>,
    /// Principal axes of the occupied voxels; empty when there are fewer than two.
    pub axes: Vec<Vector3<f64>>,
    pub context: QueryContext,
    pub coarse_context: QueryContext,
    pub screen_context: QueryContext,
}

impl PoseProblem {
    pub fn new(query: &ObservedView, latent: &LatentObject, config: &EstimateConfig) -> Result<Self> {
        config.validate()?;
        let t0 = init_translation(query)?;
        let extent = MaskExtent::of(query)?;
        let radius = latent.radius();
        let m = latent.resolution();
        let mut context = QueryContext::new(query, &t0, radius, config.image_size, m)?;
        if config.weights.lambda_latent > 0.0 {
            let dims = ModelingConfig::new(m).frustum_dims();
            context = context.with_encoded_query(query, &config.encoder, &t0, radius, dims)?;
        }
        let resized = |size: usize| -> Result<QueryContext> {
            if size == config.image_size {
                return Ok(context.clone());
            }
            let mut c = QueryContext::new(query, &t0, radius, size, m)?;
            c.query_volume = context.query_volume.clone();
            Ok(c)
        };
        let coarse_context = resized(config.coarse_image_size)?;
        let screen_context = if config.screen_image_size == config.coarse_image_size {
            coarse_context.clone()
        } else {
            resized(config.screen_image_size)?
        };
        let frame = latent.volume().frame();
        let dims = latent.volume().dims();
        let occupied = latent
            .occupied()
            .iter()
            .enumerate()
            .filter(|(_, o)| **o)
            .map(|(idx, _)| frame.voxel_center(dims, idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])))
            .collect::<Vec<_>>();
        let axes = principal_axes(&occupied);
        Ok(Self {
            latent: latent.volume().clone(),
            radius,
            intrinsics: query.camera.intrinsics,
            initial_translation: t0,
            extent,
            occupied,
            axes,
            context,
            coarse_context,
            screen_context,
        })
    }

    /// Translation placing the latent under `rotation` onto the observed mask
    /// box and nearest depth; the plain guess when the latent is empty.
    pub fn aligned(&self, rotation: &UnitQuaternion<f64>) -> Vector3<f64> {
        aligned_translation(&self.intrinsics, &self.extent, &self.occupied, rotation).unwrap_or(self.initial_translation)
    }

    /// Crop that frames the object at `translation`.
    pub fn zoom(&self, translation: &Vector3<f64>) -> Result<Viewport> {
        zoom_viewport(&self.intrinsics, translation, 2.0 * self.radius, DEFAULT_ZOOM_DISTANCE)
    }
}

fn principal_axes(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    if points.len() < 2 {
        return Vec::new();
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let cov = points.iter().map(|p| (p - mean) * (p - mean).transpose()).sum::<nalgebra::Matrix3<f64>>() / n;
    let eig = cov.symmetric_eigen();
    (0..3).map(|i| eig.eigenvectors.column(i).normalize()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Refine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The sampling search ran all its iterations.
    SearchDone,
    MaxIterations,
    Plateau,
    /// Refinement hit a non-finite loss or gradient, or a pose it cannot render.
    NonFinite,
}

/// One evaluated pose: best-so-far per search iteration, every iterate during refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseTraceRow {
    pub stage: Stage,
    pub iteration: usize,
    pub depth: f64,
    pub mask: f64,
    pub iou: f64,
    pub latent: f64,
    pub total: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    pub t_x: f64,
    pub t_y: f64,
    pub t_z: f64,
    pub u_minus: f64,
    pub v_minus: f64,
    pub u_plus: f64,
    pub v_plus: f64,
}

impl PoseTraceRow {
    pub fn new(stage: Stage, iteration: usize, pose: &PoseParams, loss: &LossBreakdown) -> Self {
        let w = quat_log_unit(&pose.rotation()).0;
        let c = pose.viewport.to_array();
        Self {
            stage,
            iteration,
            depth: loss.depth,
            mask: loss.mask,
            iou: loss.iou,
            latent: loss.latent,
            total: loss.total,
            omega_x: w.x,
            omega_y: w.y,
            omega_z: w.z,
            t_x: pose.translation.x,
            t_y: pose.translation.y,
            t_z: pose.translation.z,
            u_minus: c[0],
            v_minus: c[1],
            u_plus: c[2],
            v_plus: c[3],
        }
    }
}

pub fn trace_to_csv(rows: &[PoseTraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    /// Absolute object-to-camera rotation.
    pub omega: LogQuaternion,
    pub translation: Vector3<f64>,
    pub viewport: Viewport,
    pub loss: LossBreakdown,
    pub trace: Vec<PoseTraceRow>,
    pub stop: StopReason,
}

impl PoseEstimate {
    pub(crate) fn from_params(pose: &PoseParams, loss: LossBreakdown, trace: Vec<PoseTraceRow>, stop: StopReason) -> Self {
        Self {
            omega: quat_log_unit(&pose.rotation()),
            translation: pose.translation,
            viewport: pose.viewport,
            loss: LossBreakdown { gradient: None, ..loss },
            trace,
            stop,
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        quat_exp(&self.omega)
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(self.rotation(), self.translation)
    }

    pub fn params(&self) -> PoseParams {
        PoseParams::new(self.rotation(), self.translation, self.viewport)
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, trace_to_csv(&self.trace)?.as_bytes())
    }
}

/// Sampling search followed by refinement; deterministic given the seeds.
pub fn estimate(query: &ObservedView, latent: &LatentObject, config: &EstimateConfig) -> Result<PoseEstimate> {
    let problem = PoseProblem::new(query, latent, config)?;
    estimate_problem(&problem, config)
}

pub fn estimate_problem(problem: &PoseProblem, config: &EstimateConfig) -> Result<PoseEstimate> {
    let modes = coarse_modes(problem, &config.weights, &config.coarse)?;
    let screen = RefineConfig {
        max_iterations: config.screen_iterations,
        ..config.refine
    };
    let mut survivors = modes.clone();
    while survivors.len() > 1 {
        // screened on the cheap grid, ranked on the full one
        let mut round = Vec::with_capacity(survivors.len());
        for m in &survivors {
            let r = refine_on(problem, &problem.screen_context, m, &config.weights, &screen)?;
            let rank = score(problem, &problem.context, &r.params(), &config.weights)?.unwrap_or(f64::INFINITY);
            round.push((rank, r));
        }
        // stable, so ties keep search order
        round.sort_by(|a, b| a.0.total_cmp(&b.0));
        let keep = round.len().div_ceil(2).min(round.len() - 1);
        survivors = round.into_iter().take(keep).map(|(_, r)| r).collect();
    }
    let mut fine = refine(problem, &survivors[0], &config.weights, &config.refine)?;
    let mut trace = modes.into_iter().next().expect("at least one mode").trace;
    trace.append(&mut fine.trace);
    fine.trace = trace;
    Ok(fine)
}
