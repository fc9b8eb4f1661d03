//! TOML experiment configuration.
//!
//! Every section and key is optional; unknown keys are rejected with the
//! offending name. Sweep grids that are left out collapse to the single
//! value from `[dataset]` / `[model]` / `[train]`.

use std::path::{Path, PathBuf};

use beamfuse_core::channel::{BandConfig, SceneParams};
use beamfuse_core::datapipe::DatasetSpec;
use beamfuse_core::models::{FusionSpec, ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::results::CellKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bands {
    pub sub6: BandConfig,
    pub mmwave: BandConfig,
}

impl Default for Bands {
    fn default() -> Self {
        Self {
            sub6: BandConfig::SUB6_REFERENCE,
            mmwave: BandConfig::MMWAVE_DESK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub users: usize,
    pub scene_seed: u64,
    /// Pilot noise, augmentation phases and the split; also the training seed.
    pub seed: u64,
    pub sub6_snr_db: f64,
    pub pilot_snr_db: f64,
    pub active_antennas: usize,
    pub sub6_pilot_fraction: f64,
    pub mmwave_pilot_fraction: f64,
    pub aug_rate: f64,
    pub sparsity: bool,
    pub train_fraction: f64,
    pub data_snr_db: f64,
    /// Load scenes from a ray CSV instead of the synthetic generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ray_file: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            users: 10_000,
            scene_seed: 1,
            seed: 0,
            sub6_snr_db: 0.0,
            pilot_snr_db: 20.0,
            active_antennas: 8,
            sub6_pilot_fraction: 1.0,
            mmwave_pilot_fraction: 1.0,
            aug_rate: 1.0,
            sparsity: true,
            train_fraction: 0.8,
            data_snr_db: 0.0,
            ray_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub l_m: usize,
    pub l_s: usize,
    pub l_c: usize,
    pub width_m: usize,
    pub width_s: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let r = FusionSpec::reference();
        Self {
            kind: ModelKind::Fusion,
            l_m: r.l_m,
            l_s: r.l_s,
            l_c: r.l_c,
            width_m: 256,
            width_s: 256,
            dropout: r.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelKind>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub6_snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_antennas: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmwave_pilot_fraction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub6_pilot_fraction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aug_rate: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            models: None,
            sub6_snr_db: None,
            pilot_snr_db: None,
            active_antennas: None,
            mmwave_pilot_fraction: None,
            sub6_pilot_fraction: None,
            aug_rate: None,
            sparsity: None,
            seeds: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneParams,
    pub bands: Bands,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub sub6_snr_db: Option<f64>,
    pub pilot_snr_db: Option<f64>,
    pub active_antennas: Option<usize>,
    pub aug_rate: Option<f64>,
    pub sparsity: Option<bool>,
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {}", path.display(), strip(&e))))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(config_err)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.dataset.seed = seed;
            self.train.seed = seed;
        }
        if let Some(kind) = o.model {
            self.model.kind = kind;
        }
        if let Some(v) = o.sub6_snr_db {
            self.dataset.sub6_snr_db = v;
        }
        if let Some(v) = o.pilot_snr_db {
            self.dataset.pilot_snr_db = v;
        }
        if let Some(v) = o.active_antennas {
            self.dataset.active_antennas = v;
        }
        if let Some(v) = o.aug_rate {
            self.dataset.aug_rate = v;
        }
        if let Some(v) = o.sparsity {
            self.dataset.sparsity = v;
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        let d = &self.dataset;
        DatasetSpec {
            users: d.users,
            scene: self.scene,
            scene_seed: d.scene_seed,
            sub6_band: self.bands.sub6,
            mmwave_band: self.bands.mmwave,
            sub6_snr_db: d.sub6_snr_db,
            pilot_snr_db: d.pilot_snr_db,
            active_antennas: d.active_antennas,
            sub6_pilot_fraction: d.sub6_pilot_fraction,
            mmwave_pilot_fraction: d.mmwave_pilot_fraction,
            aug_rate: d.aug_rate,
            sparsity: d.sparsity,
            train_fraction: d.train_fraction,
            data_snr_db: d.data_snr_db,
            seed: d.seed,
        }
    }

    /// Architecture implied by the bands and active-antenna count.
    pub fn fusion_spec(&self) -> FusionSpec {
        let data = self.dataset_spec();
        let m = &self.model;
        FusionSpec {
            l_m: m.l_m,
            l_s: m.l_s,
            l_c: m.l_c,
            width_m: m.width_m,
            width_s: m.width_s,
            width_c: self.bands.mmwave.num_antennas,
            dropout: m.dropout,
            sub6_dim: data.sub6_dim(),
            mmwave_dim: data.mmwave_dim(),
        }
    }

    /// Sweep cells in grid order (models outermost, seeds innermost).
    pub fn grid(&self) -> Vec<CellKey> {
        let s = &self.sweep;
        let d = &self.dataset;
        let or = |g: &Option<Vec<f64>>, v: f64| g.clone().unwrap_or_else(|| vec![v]);
        let models = s.models.clone().unwrap_or_else(|| vec![self.model.kind]);
        let sub6 = or(&s.sub6_snr_db, d.sub6_snr_db);
        let pilot = or(&s.pilot_snr_db, d.pilot_snr_db);
        let active = s.active_antennas.clone().unwrap_or_else(|| vec![d.active_antennas]);
        let frac_m = or(&s.mmwave_pilot_fraction, d.mmwave_pilot_fraction);
        let frac_s = or(&s.sub6_pilot_fraction, d.sub6_pilot_fraction);
        let aug = or(&s.aug_rate, d.aug_rate);
        let sparsity = s.sparsity.clone().unwrap_or_else(|| vec![d.sparsity]);
        let seeds = s.seeds.clone().unwrap_or_else(|| vec![d.seed]);

        let mut cells = Vec::new();
        for &model in &models {
            for &sub6_snr_db in &sub6 {
                for &pilot_snr_db in &pilot {
                    for &n_active in &active {
                        for &frac_mmw in &frac_m {
                            for &frac_sub6 in &frac_s {
                                for &aug_rate in &aug {
                                    for &sparsity in &sparsity {
                                        for &seed in &seeds {
                                            cells.push(CellKey {
                                                model,
                                                sub6_snr_db,
                                                pilot_snr_db,
                                                n_active,
                                                frac_mmw,
                                                frac_sub6,
                                                aug_rate,
                                                sparsity,
                                                seed,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    /// The single-run configuration of one sweep cell.
    pub fn for_cell(&self, key: &CellKey) -> Self {
        let mut cfg = self.clone();
        cfg.model.kind = key.model;
        cfg.dataset.sub6_snr_db = key.sub6_snr_db;
        cfg.dataset.pilot_snr_db = key.pilot_snr_db;
        cfg.dataset.active_antennas = key.n_active;
        cfg.dataset.mmwave_pilot_fraction = key.frac_mmw;
        cfg.dataset.sub6_pilot_fraction = key.frac_sub6;
        cfg.dataset.aug_rate = key.aug_rate;
        cfg.dataset.sparsity = key.sparsity;
        cfg.dataset.seed = key.seed;
        cfg.train.seed = key.seed;
        cfg
    }

    /// Row key of this configuration as a single run.
    pub fn key(&self) -> CellKey {
        let d = &self.dataset;
        CellKey {
            model: self.model.kind,
            sub6_snr_db: d.sub6_snr_db,
            pilot_snr_db: d.pilot_snr_db,
            n_active: d.active_antennas,
            frac_mmw: d.mmwave_pilot_fraction,
            frac_sub6: d.sub6_pilot_fraction,
            aug_rate: d.aug_rate,
            sparsity: d.sparsity,
            seed: d.seed,
        }
    }

    /// Checks the base configuration; individual sweep cells are checked
    /// when they run so one bad grid value only fails its own rows.
    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        let empty = [
            ("sweep.models", s.models.as_ref().map(Vec::len)),
            ("sweep.sub6_snr_db", s.sub6_snr_db.as_ref().map(Vec::len)),
            ("sweep.pilot_snr_db", s.pilot_snr_db.as_ref().map(Vec::len)),
            ("sweep.active_antennas", s.active_antennas.as_ref().map(Vec::len)),
            ("sweep.mmwave_pilot_fraction", s.mmwave_pilot_fraction.as_ref().map(Vec::len)),
            ("sweep.sub6_pilot_fraction", s.sub6_pilot_fraction.as_ref().map(Vec::len)),
            ("sweep.aug_rate", s.aug_rate.as_ref().map(Vec::len)),
            ("sweep.sparsity", s.sparsity.as_ref().map(Vec::len)),
            ("sweep.seeds", s.seeds.as_ref().map(Vec::len)),
        ];
        if let Some((key, _)) = empty.iter().find(|(_, n)| *n == Some(0)) {
            return Err(HarnessError::Config(format!("`{key}` must not be empty")));
        }
        if s.workers == 0 {
            return Err(HarnessError::Config("`sweep.workers` must be at least 1".into()));
        }
        self.dataset_spec()
            .validate()
            .map_err(|e| HarnessError::Config(format!("[dataset]: {e}")))?;
        self.fusion_spec()
            .validate()
            .map_err(|e| HarnessError::Config(format!("[model]: {e}")))?;
        self.train
            .validate()
            .map_err(|e| HarnessError::Config(format!("[train]: {e}")))?;
        Ok(())
    }
}

fn strip(e: &HarnessError) -> String {
    match e {
        HarnessError::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}
