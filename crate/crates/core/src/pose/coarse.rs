use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{DiagGmm, Point};
use super::{PoseEstimate, PoseProblem, PoseTraceRow, Stage, StopReason};
use crate::error::{Error, Result};
use crate::geometry::{fibonacci_orientations, quat_exp, quat_log_unit, LogQuaternion};
use crate::objective::{total_loss, LossBreakdown, LossOptions, LossWeights};
use crate::rendering::PoseParams;

const EM_STEPS: usize = 10;
const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseConfig {
    pub num_orientations: usize,
    pub cem_population: usize,
    pub cem_elite_frac: f64,
    pub cem_iterations: usize,
    pub gmm_components: usize,
    /// Initial per-component standard deviation floor of omega (log-quaternion units).
    pub rotation_spread: f64,
    /// Initial per-component standard deviation floor of t, in object radii.
    pub translation_spread: f64,
    /// Per-iteration factor on both spreads.
    pub spread_decay: f64,
    /// Evaluate the latent term during the search.
    pub use_latent: bool,
    /// Distinct poses kept from the search for refinement.
    pub modes: usize,
    /// Also keep the best pose turned half a turn about each principal axis of the
    /// latent, which near-symmetric objects confuse with the true pose.
    pub symmetry_flips: bool,
    /// Minimum rotation angle between kept modes, degrees.
    pub mode_separation_deg: f64,
    pub seed: u64,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            num_orientations: 512,
            cem_population: 64,
            cem_elite_frac: 0.125,
            cem_iterations: 20,
            gmm_components: 8,
            rotation_spread: 0.06,
            translation_spread: 0.1,
            spread_decay: 0.93,
            use_latent: false,
            modes: 3,
            symmetry_flips: true,
            mode_separation_deg: 30.0,
            seed: 0,
        }
    }
}

impl CoarseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.num_orientations > 0
            && self.cem_elite_frac > 0.0
            && self.cem_elite_frac < 1.0
            && self.gmm_components > 0
            && self.cem_population >= self.gmm_components
            && self.rotation_spread >= 0.0
            && self.translation_spread >= 0.0
            && self.spread_decay > 0.0
            && self.spread_decay <= 1.0
            && self.modes > 0
            && self.mode_separation_deg >= 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("coarse config {self:?}")));
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        ((self.cem_population as f64 * self.cem_elite_frac).round() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Candidate {
    fn coords(&self, chart: &UnitQuaternion<f64>) -> Point {
        let w = quat_log_unit(&(chart.inverse() * self.rotation)).0;
        let t = self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    fn from_coords(chart: &UnitQuaternion<f64>, p: &Point) -> Self {
        Self {
            rotation: chart * quat_exp(&LogQuaternion::new(p[0], p[1], p[2])),
            translation: Vector3::new(p[3], p[4], p[5]),
        }
    }
}

fn params(problem: &PoseProblem, c: &Candidate) -> Result<PoseParams> {
    Ok(PoseParams::new(c.rotation, c.translation, problem.zoom(&c.translation)?))
}

/// Forward loss; poses that cannot be rendered score `None`.
fn evaluate(problem: &PoseProblem, c: &Candidate, weights: &LossWeights) -> Result<Option<LossBreakdown>> {
    let pose = match params(problem, c) {
        Ok(p) => p,
        Err(Error::NonPositiveDepth(_) | Error::EmptyViewport { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    match total_loss(&problem.coarse_context, &problem.latent, &pose, weights, &LossOptions::value()) {
        Ok(l) if l.total.is_finite() => Ok(Some(l)),
        Ok(_) | Err(Error::ObjectBehindCamera { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn evaluate_all(problem: &PoseProblem, pop: &[Candidate], weights: &LossWeights) -> Result<Vec<Option<LossBreakdown>>> {
    pop.par_iter().map(|c| evaluate(problem, c, weights)).collect()
}

fn total_of(l: &Option<LossBreakdown>) -> f64 {
    l.as_ref().map_or(f64::INFINITY, |l| l.total)
}

/// Orientation lattice, each placed onto the observed mask box, then a cross-entropy search
/// over `(omega, t)` driven by a Gaussian mixture fitted to the elites.
pub fn coarse_estimate(problem: &PoseProblem, weights: &LossWeights, cfg: &CoarseConfig) -> Result<PoseEstimate> {
    let mut modes = coarse_modes(problem, weights, cfg)?;
    Ok(modes.swap_remove(0))
}

/// Like [`coarse_estimate`], but returns up to `cfg.modes` of the evaluated poses, best
/// first, greedily chosen so that no two rotations are closer than the separation,
/// followed by the symmetry flips of the best if enabled. All but the first carry an
/// empty trace.
pub fn coarse_modes(problem: &PoseProblem, weights: &LossWeights, cfg: &CoarseConfig) -> Result<Vec<PoseEstimate>> {
    cfg.validate()?;
    weights.validate()?;
    let weights = &if cfg.use_latent {
        *weights
    } else {
        LossWeights {
            lambda_latent: 0.0,
            ..*weights
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<Candidate> = fibonacci_orientations(cfg.num_orientations, cfg.seed)
        .into_iter()
        .map(|rotation| Candidate {
            rotation,
            translation: problem.aligned(&rotation),
        })
        .collect();
    let mut losses = evaluate_all(problem, &pop, weights)?;
    let mut archive: Vec<(Candidate, LossBreakdown)> = Vec::new();
    let mut best: Option<(Candidate, LossBreakdown)> = None;
    let mut trace = Vec::new();
    let n_elite = cfg.elite_count();
    let min_weight = 1.0 / (cfg.cem_population as f64).powi(2);
    for it in 0..=cfg.cem_iterations {
        // candidates sorted by (loss, index); the previous best rides along last
        let mut pool: Vec<(Candidate, Option<LossBreakdown>)> = pop.iter().copied().zip(losses.iter().copied()).collect();
        if cfg.modes > 1 {
            archive.extend(pool.iter().filter_map(|(c, l)| l.map(|l| (*c, l))));
        }
        if let Some((c, l)) = best {
            pool.push((c, Some(l)));
        }
        let mut order: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].1.is_some()).collect();
        if order.is_empty() {
            return Err(Error::DegenerateElites);
        }
        order.sort_by(|&a, &b| total_of(&pool[a].1).total_cmp(&total_of(&pool[b].1)).then(a.cmp(&b)));
        let (top, top_loss) = (pool[order[0]].0, pool[order[0]].1.unwrap());
        if best.is_none_or(|(_, l)| top_loss.total < l.total) {
            best = Some((top, top_loss));
        }
        let (best_c, best_l) = best.unwrap();
        trace.push(PoseTraceRow::new(Stage::Coarse, it, &params(problem, &best_c)?, &best_l));
        if it == cfg.cem_iterations {
            break;
        }
        let chart = best_c.rotation;
        let elites: Vec<Point> = order.iter().take(n_elite).map(|&i| pool[i].0.coords(&chart)).collect();
        // a shrinking floor keeps single-elite components exploring
        let shrink = cfg.spread_decay.powi(it as i32);
        let rot = (cfg.rotation_spread * shrink).powi(2).max(VARIANCE_FLOOR);
        let trans = (cfg.translation_spread * problem.radius * shrink).powi(2).max(VARIANCE_FLOOR);
        let floor = [rot, rot, rot, trans, trans, trans];
        let gmm = DiagGmm::fit(&elites, cfg.gmm_components, &floor, EM_STEPS, min_weight, &mut rng);
        pop = (0..cfg.cem_population)
            .map(|_| Candidate::from_coords(&chart, &gmm.sample(&mut rng)))
            .collect();
        losses = evaluate_all(problem, &pop, weights)?;
    }
    let (c, l) = best.expect("at least one finite candidate");
    let mut out = vec![PoseEstimate::from_params(&params(problem, &c)?, l, trace, StopReason::SearchDone)];
    // stable sort keeps evaluation order among ties
    archive.sort_by(|a, b| a.1.total.total_cmp(&b.1.total));
    let min_angle = cfg.mode_separation_deg.to_radians();
    let mut kept = vec![c.rotation];
    for (c, l) in archive {
        if kept.len() >= cfg.modes {
            break;
        }
        if kept.iter().all(|r| r.angle_to(&c.rotation) >= min_angle) {
            kept.push(c.rotation);
            out.push(PoseEstimate::from_params(&params(problem, &c)?, l, Vec::new(), StopReason::SearchDone));
        }
    }
    if cfg.symmetry_flips {
        for axis in &problem.axes {
            let rotation = c.rotation * UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(*axis), std::f64::consts::PI);
            let flip = Candidate {
                rotation,
                translation: problem.aligned(&rotation),
            };
            if let Some(l) = evaluate(problem, &flip, weights)? {
                out.push(PoseEstimate::from_params(&params(problem, &flip)?, l, Vec::new(), StopReason::SearchDone));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{pose_fixture, small_estimate_config};

    #[test]
    fn lattice_only_search_returns_the_lattice_pose() {
        let (query, latent, _) = pose_fixture(1);
        let mut cfg = small_estimate_config();
        cfg.coarse = CoarseConfig {
            num_orientations: 1,
            cem_iterations: 0,
            modes: 1,
            symmetry_flips: false,
            ..cfg.coarse
        };
        let problem = PoseProblem::new(&query, &latent, &cfg).unwrap();
        let est = coarse_estimate(&problem, &cfg.weights, &cfg.coarse).unwrap();
        let r = fibonacci_orientations(1, cfg.coarse.seed)[0];
        assert!(est.rotation().angle_to(&r) < 1e-9);
        assert!((est.translation - problem.aligned(&r)).norm() < 1e-12);
        assert_eq!(est.trace.len(), 1);
        assert_eq!(est.stop, StopReason::SearchDone);
    }

    #[test]
    fn best_so_far_never_rises_and_runs_repeat() {
        let (query, latent, _) = pose_fixture(2);
        let cfg = small_estimate_config();
        let problem = PoseProblem::new(&query, &latent, &cfg).unwrap();
        let a = coarse_modes(&problem, &cfg.weights, &cfg.coarse).unwrap();
        assert_eq!(a[0].trace.len(), cfg.coarse.cem_iterations + 1);
        assert!(a[0].trace.windows(2).all(|w| w[1].total <= w[0].total));
        assert_eq!(a[0].trace.last().unwrap().total, a[0].loss.total);
        // best first, then separated modes, then up to three flips
        assert!(a.len() <= cfg.coarse.modes + 3);
        let sep = cfg.coarse.mode_separation_deg.to_radians();
        let searched = a.len().min(cfg.coarse.modes);
        for i in 1..searched {
            assert!(a[i].loss.total >= a[0].loss.total);
            assert!(a[..i].iter().all(|m| m.rotation().angle_to(&a[i].rotation()) >= sep));
        }
        let b = coarse_modes(&problem, &cfg.weights, &cfg.coarse).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = CoarseConfig::default();
        for bad in [
            CoarseConfig { num_orientations: 0, ..base },
            CoarseConfig { cem_elite_frac: 1.0, ..base },
            CoarseConfig { cem_population: 4, gmm_components: 8, ..base },
            CoarseConfig { modes: 0, ..base },
            CoarseConfig { spread_decay: 0.0, ..base },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(base.validate().is_ok());
    }
}
