use std::path::Path;

use serde::{Deserialize, Serialize};

use super::total::LossBreakdown;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub depth: f64,
    pub mask: f64,
    pub iou: f64,
    pub latent: f64,
    pub total: f64,
}

impl TraceRow {
    pub fn new(iteration: usize, loss: &LossBreakdown) -> Self {
        Self {
            iteration,
            depth: loss.depth,
            mask: loss.mask,
            iou: loss.iou,
            latent: loss.latent,
            total: loss.total,
        }
    }
}

/// Per-iteration loss terms, exportable as CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn push(&mut self, iteration: usize, loss: &LossBreakdown) {
        self.rows.push(TraceRow::new(iteration, loss));
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_csv()?.as_bytes())
    }
}
