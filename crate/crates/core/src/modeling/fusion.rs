use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxels::FeatureVolume;

/// Order-dependent fusion: `state <- update(state, volume)` per view, then `finalize`.
pub trait RecurrentFusion: Send + Sync {
    fn init(&self, first: &FeatureVolume) -> FeatureVolume;
    fn update(&self, state: FeatureVolume, volume: &FeatureVolume) -> FeatureVolume;
    fn finalize(&self, state: FeatureVolume) -> FeatureVolume {
        state
    }
}

/// Exponential moving average `state = decay * state + (1 - decay) * volume`.
#[derive(Clone, Copy, Debug)]
pub struct EmaFusion {
    pub decay: f64,
}

impl Default for EmaFusion {
    fn default() -> Self {
        Self { decay: 0.5 }
    }
}

impl RecurrentFusion for EmaFusion {
    fn init(&self, first: &FeatureVolume) -> FeatureVolume {
        first.clone()
    }

    fn update(&self, mut state: FeatureVolume, volume: &FeatureVolume) -> FeatureVolume {
        for (s, v) in state.data_mut().iter_mut().zip(volume.data()) {
            *s = self.decay * *s + (1.0 - self.decay) * v;
        }
        state
    }
}

#[derive(Clone)]
pub enum FusionStrategy {
    Average,
    Carve,
    Recurrent(Arc<dyn RecurrentFusion>),
}

impl fmt::Debug for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionStrategy::Average => f.write_str("Average"),
            FusionStrategy::Carve => f.write_str("Carve"),
            FusionStrategy::Recurrent(_) => f.write_str("Recurrent"),
        }
    }
}

/// Serializable selection of a built-in strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Average,
    #[default]
    Carve,
    Ema {
        decay: f64,
    },
}

impl FusionKind {
    pub fn strategy(&self) -> FusionStrategy {
        match *self {
            FusionKind::Average => FusionStrategy::Average,
            FusionKind::Carve => FusionStrategy::Carve,
            FusionKind::Ema { decay } => FusionStrategy::Recurrent(Arc::new(EmaFusion { decay })),
        }
    }
}

pub fn fuse(volumes: &[FeatureVolume], strategy: &FusionStrategy) -> Result<FeatureVolume> {
    let first = volumes.first().ok_or(Error::NoViews)?;
    if let Some(bad) = volumes.iter().position(|v| !v.same_layout(first)) {
        return Err(Error::ShapeMismatch(format!(
            "volume {bad} does not match the layout of volume 0"
        )));
    }
    match strategy {
        FusionStrategy::Average => {
            let mut out = first.clone();
            for (idx, d) in out.data_mut().iter_mut().enumerate() {
                // running mean over sorted values: order-free, exact for equal inputs
                let mut vals: Vec<f64> = volumes.iter().map(|v| v.data()[idx]).collect();
                vals.sort_by(f64::total_cmp);
                let mut mean = 0.0;
                for (n, x) in vals.iter().enumerate() {
                    mean += (x - mean) / (n + 1) as f64;
                }
                *d = mean;
            }
            Ok(out)
        }
        FusionStrategy::Carve => {
            let mut out = first.clone();
            for v in &volumes[1..] {
                for (d, s) in out.data_mut().iter_mut().zip(v.data()) {
                    *d = d.min(*s);
                }
            }
            Ok(out)
        }
        FusionStrategy::Recurrent(r) => {
            let mut state = r.init(first);
            for v in &volumes[1..] {
                state = r.update(state, v);
            }
            Ok(r.finalize(state))
        }
    }
}
