//! Dataset directories: `manifest.json` plus little-endian f32 arrays
//! `sub6.f32`, `mmwave.f32`, `labels.f32` (samples × width) and `rates.f32`
//! (users × beams), all row-major.

use std::fs;
use std::path::Path;

use beamfuse_core::datapipe::{Dataset, DatasetManifest, FeatureSet, RateTable, SCHEMA_VERSION};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn write_f32(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(HarnessError::io(path))
}

/// Reads exactly `expected` little-endian f32 values.
pub fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(HarnessError::io(path))?;
    if bytes.len() != expected * 4 {
        return Err(HarnessError::schema(
            path,
            format!("expected {} bytes ({expected} f32 values), found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::schema(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(HarnessError::io(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    dataset.features.validate()?;
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    write_json(&dir.join(MANIFEST), &dataset.manifest)?;
    write_f32(&dir.join("sub6.f32"), &dataset.features.sub6)?;
    write_f32(&dir.join("mmwave.f32"), &dataset.features.mmwave)?;
    write_f32(&dir.join("labels.f32"), &dataset.features.labels)?;
    write_f32(&dir.join("rates.f32"), &dataset.rates.rates)
}

/// Sample `i` comes from user `i mod users`: the originals first, then the
/// augmented copies in order.
fn sources(users: usize, samples: usize) -> Vec<u32> {
    (0..samples).map(|i| (i % users) as u32).collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::schema(
            &manifest_path,
            format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    let m = &manifest;
    if m.users == 0 || m.samples < m.users {
        return Err(HarnessError::schema(&manifest_path, "inconsistent user and sample counts"));
    }
    let features = FeatureSet {
        sub6_dim: m.sub6_dim,
        mmwave_dim: m.mmwave_dim,
        num_beams: m.num_beams,
        sub6: read_f32(&dir.join("sub6.f32"), m.samples * m.sub6_dim)?,
        mmwave: read_f32(&dir.join("mmwave.f32"), m.samples * m.mmwave_dim)?,
        labels: read_f32(&dir.join("labels.f32"), m.samples * m.num_beams)?,
        source: sources(m.users, m.samples),
        omega_sub6: m.omega_sub6,
        omega_mmwave: m.omega_mmwave,
    };
    features
        .validate()
        .map_err(|e| HarnessError::schema(dir, e.to_string()))?;
    let rates = RateTable {
        num_beams: m.num_beams,
        rates: read_f32(&dir.join("rates.f32"), m.users * m.num_beams)?,
    };
    Ok(Dataset {
        manifest,
        features,
        rates,
    })
}
