//! The `generate`, `train`, `eval`, `sweep` and `flops` commands.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use beamfuse_core::datapipe::{self, Dataset, DatasetManifest};
use beamfuse_core::models::{self, EpochRecord, FusionSpec, Metrics, ModelKind, Network};
use beamfuse_core::nn;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, round_to_checkpoint_precision, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::rays::load_ray_file;
use crate::results::{read_results, CellKey, ResultRow, ResultsWriter, Status};
use crate::store::{load_dataset, save_dataset, write_json};

pub const HISTORY_HEADER: [&str; 4] = ["epoch", "loss", "val_top1", "lr"];

/// Scenes from the configured ray file, or from the synthetic generator.
pub fn scenes(cfg: &ExperimentConfig) -> Result<Vec<beamfuse_core::channel::UserScene>> {
    match &cfg.dataset.ray_file {
        Some(path) => load_ray_file(path),
        None => Ok(datapipe::generate_scenes(
            &cfg.scene,
            cfg.dataset.scene_seed,
            cfg.dataset.users,
        )?),
    }
}

/// Builds the dataset of `cfg` in memory.
pub fn generate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let scenes = scenes(cfg)?;
    let mut spec = cfg.dataset_spec();
    spec.users = scenes.len();
    Ok(datapipe::build_dataset(&scenes, &spec)?)
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetManifest> {
    let dataset = generate(cfg)?;
    save_dataset(&dataset, out)?;
    Ok(dataset.manifest)
}

/// Fails unless the dataset widths are the ones `spec` was built for.
pub fn check_dims(spec: &FusionSpec, manifest: &DatasetManifest) -> Result<()> {
    let pairs = [
        ("sub-6GHz input", spec.sub6_dim, manifest.sub6_dim),
        ("mmWave input", spec.mmwave_dim, manifest.mmwave_dim),
        ("beam count", spec.width_c, manifest.num_beams),
    ];
    for (what, model, data) in pairs {
        if model != data {
            return Err(HarnessError::Dimension(format!(
                "{what}: model expects {model}, dataset has {data}"
            )));
        }
    }
    Ok(())
}

/// Trains the configured model on the training split, validating on the
/// validation split after every epoch.
pub fn train_model(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<(Network, Vec<EpochRecord>)> {
    let spec = cfg.fusion_spec();
    check_dims(&spec, &dataset.manifest)?;
    let mut net = models::build(cfg.model.kind, &spec, cfg.train.seed)?;
    let (train, val) = (dataset.train(), dataset.validation());
    let history = models::train(&mut net, &train, Some(&val), &cfg.train)?;
    round_to_checkpoint_precision(&mut net)?;
    Ok((net, history))
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut text = HISTORY_HEADER.join(",") + "\n";
    for r in history {
        text += &format!("{},{},{},{}\n", r.epoch, r.loss, r.val_top1, r.lr);
    }
    fs::write(path, text).map_err(HarnessError::io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub final_val_top1: Option<f64>,
}

/// Trains on the dataset in `dataset_dir` and writes the checkpoint,
/// `history.csv` and the resolved `config.toml` into `run_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, dataset_dir: &Path, run_dir: &Path) -> Result<TrainSummary> {
    let dataset = load_dataset(dataset_dir)?;
    let (net, history) = train_model(cfg, &dataset)?;
    save_checkpoint(run_dir, &net, &cfg.train, cfg.train.seed)?;
    write_history(&run_dir.join("history.csv"), &history)?;
    let frozen = run_dir.join("config.toml");
    fs::write(&frozen, cfg.to_toml()?).map_err(HarnessError::io(&frozen))?;
    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        epochs: history.len(),
        final_loss: history.last().map(|r| r.loss),
        final_val_top1: history.last().map(|r| r.val_top1),
    })
}

/// Metrics of `net` on the validation split.
pub fn evaluate_split(net: &Network, dataset: &Dataset) -> Result<Metrics> {
    Ok(models::evaluate(net, &dataset.validation(), &dataset.rates)?)
}

/// Evaluates a trained run on a dataset's validation split, writes
/// `metrics.json` into the run directory and appends a row to `results`.
pub fn cmd_eval(run_dir: &Path, dataset_dir: &Path, results: &Path) -> Result<Metrics> {
    let (ckpt, net) = load_checkpoint(run_dir)?;
    let dataset = load_dataset(dataset_dir)?;
    check_dims(net.spec(), &dataset.manifest)?;
    let metrics = evaluate_split(&net, &dataset)?;
    write_json(&run_dir.join("metrics.json"), &metrics)?;
    let spec = &dataset.manifest.spec;
    let key = CellKey {
        model: ckpt.kind,
        sub6_snr_db: spec.sub6_snr_db,
        pilot_snr_db: spec.pilot_snr_db,
        n_active: spec.active_antennas,
        frac_mmw: spec.mmwave_pilot_fraction,
        frac_sub6: spec.sub6_pilot_fraction,
        aug_rate: spec.aug_rate,
        sparsity: spec.sparsity,
        seed: ckpt.train.seed,
    };
    ResultsWriter::open(results)?.append(&ResultRow::ok(key, metrics))?;
    Ok(metrics)
}

/// Generates, trains and evaluates one cell entirely in memory. Scores
/// match `cmd_generate` + `cmd_train` + `cmd_eval` on the same config.
pub fn run_cell(base: &ExperimentConfig, key: &CellKey) -> Result<Metrics> {
    let cfg = base.for_cell(key);
    let dataset = generate(&cfg)?;
    let (net, _) = train_model(&cfg, &dataset)?;
    evaluate_split(&net, &dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: usize,
    pub skipped: usize,
    pub ok: usize,
    pub failed: usize,
}

/// Trains and evaluates every grid cell not already present in
/// `<out>/results.csv`. Cells that share a dataset are grouped so it is
/// built once; groups run on `sweep.workers` threads and a single writer
/// appends rows as they finish.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepSummary> {
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let results = out.join("results.csv");
    let frozen = out.join("config.toml");
    fs::write(&frozen, cfg.to_toml()?).map_err(HarnessError::io(&frozen))?;

    let done: HashSet<String> = read_results(&results)?.iter().map(|r| r.key.id()).collect();
    let grid = cfg.grid();
    let todo: Vec<CellKey> = grid.iter().filter(|k| !done.contains(&k.id())).copied().collect();

    let mut groups: Vec<Vec<CellKey>> = Vec::new();
    for key in todo {
        match groups.iter_mut().find(|g| g[0].same_data(&key)) {
            Some(g) => g.push(key),
            None => groups.push(vec![key]),
        }
    }

    let mut writer = ResultsWriter::open(&results)?;
    let mut summary = SweepSummary {
        cells: grid.len(),
        skipped: grid.len() - groups.iter().map(Vec::len).sum::<usize>(),
        ok: 0,
        failed: 0,
    };
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<ResultRow>();
    let workers = cfg.sweep.workers.min(groups.len()).max(1);
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (groups, next) = (&groups, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(group) = groups.get(i) else { break };
                for row in run_group(cfg, group) {
                    if tx.send(row).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        for row in rx {
            match row.status {
                Status::Ok => summary.ok += 1,
                Status::Failed => summary.failed += 1,
            }
            writer.append(&row)?;
        }
        Ok(())
    })?;
    Ok(summary)
}

fn run_group(base: &ExperimentConfig, group: &[CellKey]) -> Vec<ResultRow> {
    let dataset = base
        .for_cell(&group[0])
        .validate()
        .and_then(|_| generate(&base.for_cell(&group[0])));
    let dataset = match dataset {
        Ok(d) => d,
        Err(e) => {
            eprintln!("cell {} failed: {e}", group[0].id());
            return group.iter().map(|k| ResultRow::failed(*k)).collect();
        }
    };
    group
        .iter()
        .map(|key| {
            let cfg = base.for_cell(key);
            let run = train_model(&cfg, &dataset).and_then(|(net, _)| evaluate_split(&net, &dataset));
            match run {
                Ok(m) => ResultRow::ok(*key, m),
                Err(e) => {
                    eprintln!("cell {} failed: {e}", key.id());
                    ResultRow::failed(*key)
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub model: ModelKind,
    pub mmwave: u64,
    pub sub6: u64,
    pub classify: u64,
    pub total: u64,
    pub sub6_only_total: u64,
    pub ratio_to_sub6_only: f64,
}

/// Multiply counts per sub-network for the configured architecture,
/// computed from widths without allocating the network.
pub fn cmd_flops(cfg: &ExperimentConfig) -> FlopsReport {
    let spec = cfg.fusion_spec();
    let (m, s, c) = spec.width_lists(cfg.model.kind);
    let (mmwave, sub6, classify) = (
        nn::flops_of_list(&m),
        nn::flops_of_list(&s),
        nn::flops_of_list(&c),
    );
    let total = mmwave + sub6 + classify;
    let sub6_only_total = spec.flops(ModelKind::Sub6);
    FlopsReport {
        model: cfg.model.kind,
        mmwave,
        sub6,
        classify,
        total,
        sub6_only_total,
        ratio_to_sub6_only: total as f64 / sub6_only_total as f64,
    }
}
