use std::fs;

use beamfuse::checkpoint::{load_checkpoint, save_checkpoint};
use beamfuse::harness;
use beamfuse::store::{load_dataset, read_json, save_dataset, write_json};
use beamfuse::HarnessError;
use beamfuse_core::channel::{synth_channel, ChannelMatrix};
use beamfuse_core::datapipe::{self, DatasetManifest};
use beamfuse_core::estimation;
use beamfuse_core::models;
use beamfuse_core::rng::{derive, Stream};

mod common;

#[test]
fn dataset_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::tiny_config();
    cfg.dataset.aug_rate = 2.0;
    let ds = harness::generate(&cfg).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    assert_eq!(back.rates, ds.rates);
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.features.sub6), bits(&ds.features.sub6));
    assert_eq!(bits(&back.features.mmwave), bits(&ds.features.mmwave));
    assert_eq!(back.features, ds.features);
}

#[test]
fn truncated_array_is_a_size_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = harness::generate(&common::tiny_config()).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join("mmwave.f32");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    match load_dataset(dir.path()) {
        Err(HarnessError::Schema { msg, .. }) => assert!(msg.contains("bytes"), "{msg}"),
        other => panic!("expected a size error, got {other:?}"),
    }
}

#[test]
fn version_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = harness::generate(&common::tiny_config()).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let mut m: DatasetManifest = read_json(&path).unwrap();
    m.schema_version += 1;
    write_json(&path, &m).unwrap();
    match load_dataset(dir.path()) {
        Err(HarnessError::Schema { msg, .. }) => assert!(msg.contains("version"), "{msg}"),
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn manifest_omega_matches_training_users() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config();
    save_dataset(&harness::generate(&cfg).unwrap(), dir.path()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    let spec = &ds.manifest.spec;

    // recompute the estimated mmWave channels of the training users
    let scenes = harness::scenes(&cfg).unwrap();
    let truth: Vec<ChannelMatrix> = scenes
        .iter()
        .map(|s| datapipe::user_channels(s, &spec.sub6_band, &spec.mmwave_band).unwrap().1)
        .collect();
    let var = estimation::noise_variance_for_snr(&truth, spec.pilot_snr_db).unwrap();
    let mut omega: f64 = 0.0;
    for &u in &ds.manifest.train_users {
        let mut rng = derive(spec.seed, scenes[u as usize].user_id, Stream::MmwaveNoise);
        let est = estimation::estimate_mmwave_partial(
            &truth[u as usize],
            spec.active_antennas,
            spec.mmwave_pilot_fraction,
            var,
            &mut rng,
        )
        .unwrap();
        let est = datapipe::delay_transform(&est).unwrap();
        for v in est.values() {
            omega = omega.max(v.norm());
        }
    }
    assert!((omega - ds.manifest.omega_mmwave).abs() <= 1e-12 * omega);
    assert_eq!(ds.features.omega_mmwave, ds.manifest.omega_mmwave);
    // sanity: the sub-6 ground truth synthesizes from the same rays
    let h = synth_channel(&scenes[0].sub6_rays, &spec.sub6_band).unwrap();
    assert_eq!(h.rows(), spec.sub6_band.num_antennas);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config();
    let ds = harness::generate(&cfg).unwrap();
    let (net, _) = harness::train_model(&cfg, &ds).unwrap();
    save_checkpoint(dir.path(), &net, &cfg.train, cfg.train.seed).unwrap();
    let (manifest, back) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(manifest.kind, net.kind());
    assert_eq!(manifest.spec, *net.spec());
    assert_eq!(back.state(), net.state());
    let val = ds.validation();
    assert_eq!(
        models::evaluate(&back, &val, &ds.rates).unwrap(),
        models::evaluate(&net, &val, &ds.rates).unwrap()
    );

    let values = dir.path().join("checkpoint.f32");
    let bytes = fs::read(&values).unwrap();
    fs::write(&values, &bytes[..8]).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(HarnessError::Schema { .. })));
}
