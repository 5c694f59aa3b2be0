//! Flat little-endian `f64` dump in `(c, z, y, x)` order plus a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::volume::{FeatureVolume, VolumeFrame};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_atomic, write_json};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DumpHeader {
    pub channels: usize,
    /// `[nx, ny, nz]`.
    pub resolution: [usize; 3],
    pub frame: VolumeFrame,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_dump(volume: &FeatureVolume, bin: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(volume.data().len() * 8);
    for v in volume.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(bin, &bytes)?;
    write_json(
        &sidecar_path(bin),
        &DumpHeader {
            channels: volume.channels(),
            resolution: volume.dims(),
            frame: *volume.frame(),
        },
    )
}

pub fn read_dump(bin: &Path) -> Result<FeatureVolume> {
    let header: DumpHeader = read_json(&sidecar_path(bin))?;
    let bytes = std::fs::read(bin).map_err(|e| Error::io(bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} is not a whole number of f64 values",
            bin.display()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    header.frame.validate()?;
    FeatureVolume::from_vec(header.channels, header.resolution, header.frame, data)
}
