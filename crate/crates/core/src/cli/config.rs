use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modeling::{FusionKind, ModelingConfig, OccupancyEncoder};
use crate::pose::EstimateConfig;
use crate::rendering::BlendConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelingSection {
    /// Edge length `M` of the latent cube.
    pub resolution: usize,
    pub fusion: FusionKind,
    pub encoder: OccupancyEncoder,
}

impl Default for ModelingSection {
    fn default() -> Self {
        Self {
            resolution: 16,
            fusion: FusionKind::default(),
            encoder: OccupancyEncoder::default(),
        }
    }
}

impl ModelingSection {
    pub fn config(&self) -> ModelingConfig {
        ModelingConfig::new(self.resolution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    /// Lateral samples of the camera volume when rendering full frames.
    pub lateral: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self { lateral: 128 }
    }
}

/// Every tunable of a run, echoed fully resolved beside its outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub modeling: ModelingSection,
    pub estimate: EstimateConfig,
    pub blend: BlendConfig,
    pub render: RenderSection,
}

impl RunConfig {
    /// Reads TOML for `.toml` files and JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seeds every randomized stage from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.estimate.coarse.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.modeling.resolution == 0 || self.render.lateral == 0 {
            return Err(Error::InvalidConfig("resolutions must be positive".into()));
        }
        self.estimate.validate()?;
        self.blend.validate()
    }
}
