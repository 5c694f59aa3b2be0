use serde::{Deserialize, Serialize};

use super::{PoseEstimate, PoseProblem, PoseTraceRow, Stage, StopReason};
use crate::error::{Error, Result};
use crate::objective::{total_loss, LossBreakdown, LossOptions, LossWeights, QueryContext};
use crate::rendering::{PoseParams, POSE_DIM};

/// Refinement iterations between chart recenterings.
const RECENTER_EVERY: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub max_iterations: usize,
    pub lr_rotation: f64,
    pub lr_translation: f64,
    pub lr_viewport: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub plateau_patience: usize,
    pub plateau_tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            lr_rotation: 3e-3,
            lr_translation: 1e-3,
            lr_viewport: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            plateau_patience: 20,
            plateau_tol: 1e-4,
        }
    }
}

impl RefineConfig {
    /// Zero rates are accepted; they freeze the pose.
    pub fn validate(&self) -> Result<()> {
        let rates = [self.lr_rotation, self.lr_translation, self.lr_viewport];
        let ok = rates.iter().all(|r| *r >= 0.0 && r.is_finite())
            && self.adam_beta1 > 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 > 0.0
            && self.adam_beta2 < 1.0
            && self.adam_epsilon > 0.0
            && self.plateau_tol >= 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("refine config {self:?}")));
        }
        Ok(())
    }

    fn rate(&self, i: usize) -> f64 {
        match i {
            0..3 => self.lr_rotation,
            3..6 => self.lr_translation,
            _ => self.lr_viewport,
        }
    }
}

fn evaluate(problem: &PoseProblem, ctx: &QueryContext, pose: &PoseParams, weights: &LossWeights) -> Result<Option<LossBreakdown>> {
    match total_loss(ctx, &problem.latent, pose, weights, &LossOptions::with_gradient()) {
        Ok(l) => Ok(Some(l)),
        Err(Error::ObjectBehindCamera { .. } | Error::EmptyViewport { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Loss of `pose` on `ctx`; `None` when it cannot be rendered there.
pub fn score(problem: &PoseProblem, ctx: &QueryContext, pose: &PoseParams, weights: &LossWeights) -> Result<Option<f64>> {
    Ok(evaluate(problem, ctx, pose, weights)?.map(|l| l.total))
}

/// Adam on `(omega, t, c)` from `start`; returns the lowest-loss iterate seen.
pub fn refine(problem: &PoseProblem, start: &PoseEstimate, weights: &LossWeights, cfg: &RefineConfig) -> Result<PoseEstimate> {
    refine_on(problem, &problem.context, start, weights, cfg)
}

/// [`refine`] against another target grid of the same query.
pub fn refine_on(
    problem: &PoseProblem,
    ctx: &QueryContext,
    start: &PoseEstimate,
    weights: &LossWeights,
    cfg: &RefineConfig,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    weights.validate()?;
    let mut pose = start.params();
    let first = evaluate(problem, ctx, &pose, weights)?.ok_or(Error::ObjectBehindCamera { near: pose.translation.z - problem.radius })?;
    let mut best = (pose, first);
    let mut current = first;
    let mut trace = Vec::new();
    let mut m = [0.0; POSE_DIM];
    let mut v = [0.0; POSE_DIM];
    let mut stalled = 0;
    let mut stop = StopReason::MaxIterations;
    for it in 0..cfg.max_iterations {
        trace.push(PoseTraceRow::new(Stage::Refine, it, &pose, &current));
        let g = match current.gradient {
            Some(g) if current.total.is_finite() && g.iter().all(|x| x.is_finite()) => g,
            _ => {
                stop = StopReason::NonFinite;
                break;
            }
        };
        let step = (it + 1) as i32;
        let mut theta = pose.to_vector();
        for i in 0..POSE_DIM {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - cfg.adam_beta1.powi(step));
            let vh = v[i] / (1.0 - cfg.adam_beta2.powi(step));
            theta[i] -= cfg.rate(i) * mh / (vh.sqrt() + cfg.adam_epsilon);
        }
        pose = pose.with_vector(&theta);
        if (it + 1) % RECENTER_EVERY == 0 {
            pose = pose.recentered();
        }
        if it + 1 == cfg.max_iterations {
            break;
        }
        current = match evaluate(problem, ctx, &pose, weights)? {
            Some(l) => l,
            None => {
                stop = StopReason::NonFinite;
                break;
            }
        };
        let before = best.1.total;
        if current.total < before {
            best = (pose, current);
        }
        let gain = (before - best.1.total) / before.abs().max(f64::MIN_POSITIVE);
        stalled = if gain < cfg.plateau_tol { stalled + 1 } else { 0 };
        if stalled >= cfg.plateau_patience {
            trace.push(PoseTraceRow::new(Stage::Refine, it + 1, &pose, &current));
            stop = StopReason::Plateau;
            break;
        }
    }
    Ok(PoseEstimate::from_params(&best.0, best.1, trace, stop))
}
