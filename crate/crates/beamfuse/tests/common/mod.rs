#![allow(dead_code)]

use beamfuse::config::ExperimentConfig;
use beamfuse_core::channel::BandConfig;

/// A few-second configuration: 60 users, 16 mmWave antennas, 8 subcarriers.
pub fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.users = 60;
    cfg.dataset.active_antennas = 4;
    cfg.bands.mmwave = BandConfig {
        num_antennas: 16,
        num_subcarriers: 8,
        ..BandConfig::MMWAVE_DESK
    };
    cfg.bands.sub6 = BandConfig {
        num_subcarriers: 8,
        ..BandConfig::SUB6_REFERENCE
    };
    cfg.model.width_m = 16;
    cfg.model.width_s = 16;
    cfg.train.batch_size = 16;
    cfg.train.epochs = 3;
    cfg
}
