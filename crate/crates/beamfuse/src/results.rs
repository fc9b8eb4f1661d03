//! Results CSV, one row per evaluated cell.
//!
//! Columns, in order: `model,sub6_snr_db,pilot_snr_db,n_active,frac_mmw,
//! frac_sub6,aug_rate,sparsity,seed,status,top1,top3,rate_ratio`. `sparsity`
//! is `on`/`off`, `status` is `ok`/`failed`, metrics are empty on failure.
//! The first nine columns form the row key.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use beamfuse_core::models::{Metrics, ModelKind};

use crate::error::{HarnessError, Result};

pub const RESULT_COLUMNS: [&str; 13] = [
    "model",
    "sub6_snr_db",
    "pilot_snr_db",
    "n_active",
    "frac_mmw",
    "frac_sub6",
    "aug_rate",
    "sparsity",
    "seed",
    "status",
    "top1",
    "top3",
    "rate_ratio",
];

/// Identity of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub model: ModelKind,
    pub sub6_snr_db: f64,
    pub pilot_snr_db: f64,
    pub n_active: usize,
    pub frac_mmw: f64,
    pub frac_sub6: f64,
    pub aug_rate: f64,
    pub sparsity: bool,
    pub seed: u64,
}

impl CellKey {
    fn fields(&self) -> [String; 9] {
        [
            self.model.name().to_string(),
            self.sub6_snr_db.to_string(),
            self.pilot_snr_db.to_string(),
            self.n_active.to_string(),
            self.frac_mmw.to_string(),
            self.frac_sub6.to_string(),
            self.aug_rate.to_string(),
            if self.sparsity { "on" } else { "off" }.to_string(),
            self.seed.to_string(),
        ]
    }

    /// Canonical text form used for resume bookkeeping.
    pub fn id(&self) -> String {
        self.fields().join(",")
    }

    /// Same cell apart from the model.
    pub fn same_data(&self, other: &CellKey) -> bool {
        CellKey {
            model: other.model,
            ..*self
        }
        .id()
            == other.id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

/// The metric columns of a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub top1: f64,
    pub top3: f64,
    pub rate_ratio: f64,
}

impl From<Metrics> for RowMetrics {
    fn from(m: Metrics) -> Self {
        Self {
            top1: m.top1,
            top3: m.top3,
            rate_ratio: m.rate_ratio_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub key: CellKey,
    pub status: Status,
    pub metrics: Option<RowMetrics>,
}

impl ResultRow {
    pub fn ok(key: CellKey, metrics: Metrics) -> Self {
        Self {
            key,
            status: Status::Ok,
            metrics: Some(metrics.into()),
        }
    }

    pub fn failed(key: CellKey) -> Self {
        Self {
            key,
            status: Status::Failed,
            metrics: None,
        }
    }

    fn record(&self) -> Vec<String> {
        let mut r: Vec<String> = self.key.fields().into();
        r.push(match self.status {
            Status::Ok => "ok".into(),
            Status::Failed => "failed".into(),
        });
        match &self.metrics {
            Some(m) => {
                r.extend([m.top1, m.top3, m.rate_ratio].map(|v| v.to_string()));
            }
            None => r.extend([String::new(), String::new(), String::new()]),
        }
        r
    }

    fn parse(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        if rec.len() != RESULT_COLUMNS.len() {
            return Err(format!("expected {} columns, found {}", RESULT_COLUMNS.len(), rec.len()));
        }
        let f = |i: usize| -> std::result::Result<f64, String> {
            rec[i]
                .parse()
                .map_err(|_| format!("column {}: not a number: {:?}", RESULT_COLUMNS[i], &rec[i]))
        };
        let u = |i: usize| -> std::result::Result<u64, String> {
            rec[i]
                .parse()
                .map_err(|_| format!("column {}: not an integer: {:?}", RESULT_COLUMNS[i], &rec[i]))
        };
        let key = CellKey {
            model: ModelKind::parse(&rec[0]).ok_or_else(|| format!("unknown model {:?}", &rec[0]))?,
            sub6_snr_db: f(1)?,
            pilot_snr_db: f(2)?,
            n_active: u(3)? as usize,
            frac_mmw: f(4)?,
            frac_sub6: f(5)?,
            aug_rate: f(6)?,
            sparsity: match &rec[7] {
                "on" => true,
                "off" => false,
                other => return Err(format!("sparsity must be on/off, found {other:?}")),
            },
            seed: u(8)?,
        };
        match &rec[9] {
            "ok" => Ok(ResultRow {
                key,
                status: Status::Ok,
                metrics: Some(RowMetrics {
                    top1: f(10)?,
                    top3: f(11)?,
                    rate_ratio: f(12)?,
                }),
            }),
            "failed" => Ok(ResultRow::failed(key)),
            other => Err(format!("status must be ok/failed, found {other:?}")),
        }
    }
}

/// Reads every complete row; a missing or empty file reads as empty and an
/// unterminated trailing line is ignored.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::io(path)(e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete == 0 {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(&bytes[..complete]);
    let header_ok = reader
        .headers()
        .map(|h| h.iter().eq(RESULT_COLUMNS))
        .unwrap_or(false);
    if !header_ok {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", RESULT_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(ResultRow::parse(&rec).map_err(|msg| HarnessError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?);
    }
    Ok(rows)
}

/// Appends rows to a results file, writing the header first if the file is
/// new. Each row is flushed as soon as it is written.
pub struct ResultsWriter {
    path: PathBuf,
    file: File,
}

impl ResultsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
        }
        drop_partial_line(path)?;
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(HarnessError::io(path))?;
        let mut w = Self {
            path: path.to_path_buf(),
            file,
        };
        if fresh {
            w.write_line(RESULT_COLUMNS.iter().map(|s| s.to_string()).collect())?;
        }
        Ok(w)
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        self.write_line(row.record())
    }

    fn write_line(&mut self, fields: Vec<String>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(&fields).map_err(|e| HarnessError::schema(&self.path, e.to_string()))?;
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::schema(&self.path, e.to_string()))?;
        self.file.write_all(&bytes).map_err(HarnessError::io(&self.path))?;
        self.file.flush().map_err(HarnessError::io(&self.path))
    }
}

/// Cuts an unterminated trailing line left by an interrupted write.
fn drop_partial_line(path: &Path) -> Result<()> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(());
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    fs::write(path, &bytes[..keep]).map_err(HarnessError::io(path))
}
