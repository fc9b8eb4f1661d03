//! Model checkpoints: `checkpoint.json` (architecture, layer list, training
//! settings, seeds) plus `checkpoint.f32`, the little-endian parameter and
//! running-statistic values in layer order.

use std::path::Path;

use beamfuse_core::models::{self, FusionSpec, ModelKind, Network, TrainConfig};
use beamfuse_core::nn::LayerKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::store::{read_f32, read_json, write_f32, write_json};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLists {
    pub mmwave: Vec<LayerKind>,
    pub sub6: Vec<LayerKind>,
    pub head: Vec<LayerKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub kind: ModelKind,
    pub spec: FusionSpec,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub layers: LayerLists,
    pub values: usize,
}

fn layer_lists(net: &Network) -> LayerLists {
    let (mmwave, sub6, head) = net.layer_kinds();
    LayerLists { mmwave, sub6, head }
}

pub fn save_checkpoint(dir: &Path, net: &Network, train: &TrainConfig, init_seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let state: Vec<f32> = net.state().iter().map(|&v| v as f32).collect();
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        kind: net.kind(),
        spec: *net.spec(),
        train: *train,
        init_seed,
        layers: layer_lists(net),
        values: state.len(),
    };
    write_json(&dir.join("checkpoint.json"), &manifest)?;
    write_f32(&dir.join("checkpoint.f32"), &state)
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Network)> {
    let path = dir.join("checkpoint.json");
    let manifest: CheckpointManifest = read_json(&path)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(HarnessError::schema(
            &path,
            format!("checkpoint version {} is not supported", manifest.version),
        ));
    }
    let mut net = models::build(manifest.kind, &manifest.spec, manifest.init_seed)?;
    if layer_lists(&net) != manifest.layers {
        return Err(HarnessError::schema(&path, "layer list does not match the architecture"));
    }
    let values = read_f32(&dir.join("checkpoint.f32"), manifest.values)?;
    let state: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    net.load_state(&state)
        .map_err(|e| HarnessError::schema(&path, e.to_string()))?;
    Ok((manifest, net))
}

/// Rounds every stored value through f32, so an in-memory network scores
/// exactly like its reloaded checkpoint.
pub fn round_to_checkpoint_precision(net: &mut Network) -> Result<()> {
    let state: Vec<f64> = net.state().iter().map(|&v| v as f32 as f64).collect();
    net.load_state(&state)?;
    Ok(())
}
