//! Ray-parameter CSV files.
//!
//! Header `user_id,band,azimuth_rad,elevation_rad,gain_re,gain_im,delay_s`,
//! one row per ray, `band` is `sub6` or `mmwave`, rows grouped by user.

use std::fs::File;
use std::path::Path;

use beamfuse_core::channel::{RayPath, UserScene};
use beamfuse_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const RAY_HEADER: [&str; 7] = [
    "user_id",
    "band",
    "azimuth_rad",
    "elevation_rad",
    "gain_re",
    "gain_im",
    "delay_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Band {
    Sub6,
    Mmwave,
}

#[derive(Debug, Serialize, Deserialize)]
struct RayRow {
    user_id: u64,
    band: Band,
    azimuth_rad: f64,
    elevation_rad: f64,
    gain_re: f64,
    gain_im: f64,
    delay_s: f64,
}

impl RayRow {
    fn new(user_id: u64, band: Band, ray: &RayPath) -> Self {
        Self {
            user_id,
            band,
            azimuth_rad: ray.azimuth_rad,
            elevation_rad: ray.elevation_rad,
            gain_re: ray.gain.re,
            gain_im: ray.gain.im,
            delay_s: ray.delay_s,
        }
    }

    fn ray(&self) -> RayPath {
        RayPath {
            azimuth_rad: self.azimuth_rad,
            elevation_rad: self.elevation_rad,
            gain: Complex64::new(self.gain_re, self.gain_im),
            delay_s: self.delay_s,
        }
    }
}

/// Reads one [`UserScene`] per user block. An empty file gives no scenes.
pub fn load_ray_file(path: &Path) -> Result<Vec<UserScene>> {
    let file = File::open(path).map_err(HarnessError::io(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_error(path, e))?,
    };
    if header.iter().map(str::trim).ne(RAY_HEADER) {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", RAY_HEADER.join(",")),
        });
    }

    let mut scenes: Vec<UserScene> = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: RayRow = record.deserialize(None).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line,
            msg: parse_message(&e),
        })?;
        let scene = match scenes.last_mut() {
            Some(s) if s.user_id == row.user_id => s,
            _ => {
                if scenes.iter().any(|s| s.user_id == row.user_id) {
                    return Err(HarnessError::schema(
                        path,
                        format!("line {line}: rows of user {} are not contiguous", row.user_id),
                    ));
                }
                scenes.push(UserScene {
                    user_id: row.user_id,
                    sub6_rays: Vec::new(),
                    mmwave_rays: Vec::new(),
                });
                scenes.last_mut().expect("just pushed")
            }
        };
        match row.band {
            Band::Sub6 => scene.sub6_rays.push(row.ray()),
            Band::Mmwave => scene.mmwave_rays.push(row.ray()),
        }
    }
    for scene in &scenes {
        scene
            .validate()
            .map_err(|e| HarnessError::schema(path, format!("user {}: {e}", scene.user_id)))?;
    }
    Ok(scenes)
}

/// Writes scenes in the layout [`load_ray_file`] reads; floats use the
/// shortest round-trip representation.
pub fn save_ray_file(path: &Path, scenes: &[UserScene]) -> Result<()> {
    let file = File::create(path).map_err(HarnessError::io(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let write_err = |e: csv::Error| csv_error(path, e);
    writer.write_record(RAY_HEADER).map_err(write_err)?;
    for scene in scenes {
        let rows = scene
            .sub6_rays
            .iter()
            .map(|r| RayRow::new(scene.user_id, Band::Sub6, r))
            .chain(scene.mmwave_rays.iter().map(|r| RayRow::new(scene.user_id, Band::Mmwave, r)));
        for row in rows {
            writer.serialize(row).map_err(|e| csv_error(path, e))?;
        }
    }
    writer.flush().map_err(HarnessError::io(path))
}

fn parse_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("column {}: {}", RAY_HEADER.get(f as usize).unwrap_or(&"?"), err.kind()),
            None => err.kind().to_string(),
        },
        other => format!("{other:?}"),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => HarnessError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}
