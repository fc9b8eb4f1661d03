//! From estimated channels to network-ready feature arrays.
//!
//! Feature layout per sample: all real parts, then all imaginary parts; each
//! block walks antennas in order with the subcarrier (or delay tap) index
//! varying fastest.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::beams::{self, Codebook};
use crate::channel::{self, BandConfig, ChannelMatrix, Domain, SceneParams, UserScene};
use crate::error::{check_dim, invalid, Error, Result};
use crate::estimation::{self, PilotConfig};
use crate::rng::{self, Stream};

pub const SCHEMA_VERSION: u32 = 1;
pub const FEATURE_ORDER: &str = "real-block-then-imag-block/antenna-major/subcarrier-fastest";

/// Largest entry modulus over a collection of channels.
pub fn global_normalizer<'a, I>(channels: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a ChannelMatrix>,
{
    let mut seen = false;
    let mut omega: f64 = 0.0;
    for ch in channels {
        seen = true;
        omega = omega.max(ch.max_abs());
    }
    if !seen {
        return Err(invalid("normalizer needs at least one channel"));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Degenerate("all channel entries are zero".into()));
    }
    Ok(omega)
}

/// Divides by `omega` and flattens to `[re..., im...]`.
pub fn to_real_features(channel: &ChannelMatrix, omega: f64) -> Result<Vec<f64>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(invalid("normalizer must be positive"));
    }
    let v = channel.values();
    let mut out = Vec::with_capacity(2 * v.len());
    out.extend(v.iter().map(|x| x.re / omega));
    out.extend(v.iter().map(|x| x.im / omega));
    Ok(out)
}

/// Row-major normalized DFT matrix `F[i, j] = exp(-j2π·ij/n)/√n`.
fn dft_matrix(n: usize) -> Vec<Complex64> {
    let scale = 1.0 / libm::sqrt(n as f64);
    let mut f = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let m = (i * j) % n;
            f.push(Complex64::from_polar(scale, -2.0 * PI * m as f64 / n as f64));
        }
    }
    f
}

/// `H·F_dᴴ` with the unitary subcarrier DFT.
fn right_mul_dft_adjoint(h: &ChannelMatrix) -> ChannelMatrix {
    let k = h.cols();
    let f = dft_matrix(k);
    let mut out = ChannelMatrix::zeros(h.rows(), k, h.domain());
    for n in 0..h.rows() {
        let row = h.row(n);
        for d in 0..k {
            let fd = &f[d * k..(d + 1) * k];
            let acc: Complex64 = row.iter().zip(fd).map(|(x, w)| x * w.conj()).sum();
            out.set(n, d, acc);
        }
    }
    out
}

/// Spatial-frequency to spatial-delay: `H^{sd} = H^{sf}·F_dᴴ`.
pub fn delay_transform(channel: &ChannelMatrix) -> Result<ChannelMatrix> {
    if channel.domain() != Domain::SpatialFrequency {
        return Err(invalid("delay transform expects a spatial-frequency channel"));
    }
    Ok(right_mul_dft_adjoint(channel).with_domain(Domain::SpatialDelay))
}

/// Spatial-frequency to angular-delay: `H^{ad} = F_a·H^{sf}·F_dᴴ`.
pub fn angle_delay_transform(channel: &ChannelMatrix) -> Result<ChannelMatrix> {
    if channel.domain() != Domain::SpatialFrequency {
        return Err(invalid(
            "angle-delay transform expects a spatial-frequency channel",
        ));
    }
    let sd = right_mul_dft_adjoint(channel);
    let (n, k) = (sd.rows(), sd.cols());
    let fa = dft_matrix(n);
    let mut out = ChannelMatrix::zeros(n, k, Domain::AngularDelay);
    for i in 0..n {
        for d in 0..k {
            let acc: Complex64 = (0..n).map(|m| fa[i * n + m] * sd.get(m, d)).sum();
            out.set(i, d, acc);
        }
    }
    Ok(out)
}

/// Multiplies every entry by `exp(-j2π·phase)`.
pub fn rotate_phase(channel: &ChannelMatrix, phase: f64) -> ChannelMatrix {
    channel.scaled(Complex64::from_polar(1.0, -2.0 * PI * phase))
}

/// mmWave augmentation with a per-user phase `φ ∈ [0, 1)`.
pub fn augment_mmwave(channel: &ChannelMatrix, phi: f64) -> ChannelMatrix {
    rotate_phase(channel, phi)
}

/// sub-6GHz augmentation with a per-user phase `χ ∈ [0, 1)`, drawn
/// independently of the mmWave phase.
pub fn augment_sub6(channel: &ChannelMatrix, chi: f64) -> ChannelMatrix {
    rotate_phase(channel, chi)
}

/// Per-user achievable rate of every codebook beam, used to score
/// predictions without keeping the channels around.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub num_beams: usize,
    /// `users × num_beams`, row-major.
    pub rates: Vec<f32>,
}

impl RateTable {
    pub fn from_channels(channels: &[ChannelMatrix], codebook: &Codebook, snr_linear: f64) -> Result<Self> {
        let mut rates = Vec::with_capacity(channels.len() * codebook.len());
        for ch in channels {
            for r in beams::beam_rates(ch, codebook, snr_linear)? {
                rates.push(r as f32);
            }
        }
        Ok(Self {
            num_beams: codebook.len(),
            rates,
        })
    }

    pub fn users(&self) -> usize {
        self.rates.len().checked_div(self.num_beams).unwrap_or(0)
    }

    pub fn user(&self, u: usize) -> &[f32] {
        &self.rates[u * self.num_beams..(u + 1) * self.num_beams]
    }

    /// Predicted-beam rate over the best rate for user `u`.
    pub fn ratio(&self, u: usize, predicted: usize) -> Result<f64> {
        let row: Vec<f64> = self.user(u).iter().map(|&r| r as f64).collect();
        beams::ratio_from_rates(&row, predicted)
    }
}

/// Normalized features and one-hot labels, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub sub6_dim: usize,
    pub mmwave_dim: usize,
    pub num_beams: usize,
    pub sub6: Vec<f32>,
    pub mmwave: Vec<f32>,
    pub labels: Vec<f32>,
    /// Originating user of each row; augmented copies point at their source.
    pub source: Vec<u32>,
    pub omega_sub6: f64,
    pub omega_mmwave: f64,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn sub6_row(&self, i: usize) -> &[f32] {
        &self.sub6[i * self.sub6_dim..(i + 1) * self.sub6_dim]
    }

    pub fn mmwave_row(&self, i: usize) -> &[f32] {
        &self.mmwave[i * self.mmwave_dim..(i + 1) * self.mmwave_dim]
    }

    pub fn label_row(&self, i: usize) -> &[f32] {
        &self.labels[i * self.num_beams..(i + 1) * self.num_beams]
    }

    /// Index of the hot entry of row `i`.
    pub fn label(&self, i: usize) -> usize {
        let row = self.label_row(i);
        row.iter().position(|&t| t == 1.0).unwrap_or(0)
    }

    /// Checks array lengths against the declared dimensions.
    pub fn validate(&self) -> Result<()> {
        let n = self.source.len();
        check_dim("sub-6GHz features", n * self.sub6_dim, self.sub6.len())?;
        check_dim("mmWave features", n * self.mmwave_dim, self.mmwave.len())?;
        check_dim("labels", n * self.num_beams, self.labels.len())?;
        for i in 0..n {
            let row = self.label_row(i);
            let hot = row.iter().filter(|&&t| t == 1.0).count();
            let sum: f32 = row.iter().sum();
            if hot != 1 || sum != 1.0 {
                return Err(invalid("label rows must be one-hot"));
            }
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        let mut out = FeatureSet {
            sub6: Vec::with_capacity(indices.len() * self.sub6_dim),
            mmwave: Vec::with_capacity(indices.len() * self.mmwave_dim),
            labels: Vec::with_capacity(indices.len() * self.num_beams),
            source: Vec::with_capacity(indices.len()),
            ..self.empty_like()
        };
        for &i in indices {
            out.sub6.extend_from_slice(self.sub6_row(i));
            out.mmwave.extend_from_slice(self.mmwave_row(i));
            out.labels.extend_from_slice(self.label_row(i));
            out.source.push(self.source[i]);
        }
        out
    }

    fn empty_like(&self) -> FeatureSet {
        FeatureSet {
            sub6_dim: self.sub6_dim,
            mmwave_dim: self.mmwave_dim,
            num_beams: self.num_beams,
            sub6: Vec::new(),
            mmwave: Vec::new(),
            labels: Vec::new(),
            source: Vec::new(),
            omega_sub6: self.omega_sub6,
            omega_mmwave: self.omega_mmwave,
        }
    }

    /// Splits rows by the side their source user falls on.
    pub fn partition(&self, train_users: &[u32]) -> (FeatureSet, FeatureSet) {
        let max = self.source.iter().copied().max().unwrap_or(0) as usize;
        let mut is_train = vec![false; max + 1];
        for &u in train_users {
            if (u as usize) <= max {
                is_train[u as usize] = true;
            }
        }
        let (train, val): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|&i| is_train[self.source[i] as usize]);
        (self.select(&train), self.select(&val))
    }
}

/// Deterministic shuffled user split; returns `(train, validation)`, each
/// sorted.
pub fn split_users(users: &[u32], train_fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid("train fraction must lie in (0, 1)"));
    }
    let n_train = libm::round(users.len() as f64 * train_fraction) as usize;
    if n_train == 0 || n_train >= users.len() {
        return Err(invalid("split leaves one side empty"));
    }
    let mut order = users.to_vec();
    order.shuffle(&mut rng::derive(seed, 0, Stream::Split));
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// User-level train/validation split of a feature set. Augmented copies
/// stay on the side of their source user.
pub fn split(features: &FeatureSet, train_fraction: f64, seed: u64) -> Result<(FeatureSet, FeatureSet)> {
    let mut users = features.source.clone();
    users.sort_unstable();
    users.dedup();
    let (train, _) = split_users(&users, train_fraction, seed)?;
    Ok(features.partition(&train))
}

mod snr_serde {
    use core::fmt;
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct DbVisitor;

    impl Visitor<'_> for DbVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number of dB or \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(DbVisitor)
    }
}

/// Everything needed to rebuild a dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub users: usize,
    pub scene: SceneParams,
    pub scene_seed: u64,
    pub sub6_band: BandConfig,
    pub mmwave_band: BandConfig,
    #[serde(with = "snr_serde")]
    pub sub6_snr_db: f64,
    #[serde(with = "snr_serde")]
    pub pilot_snr_db: f64,
    pub active_antennas: usize,
    pub sub6_pilot_fraction: f64,
    pub mmwave_pilot_fraction: f64,
    pub aug_rate: f64,
    pub sparsity: bool,
    pub train_fraction: f64,
    pub data_snr_db: f64,
    /// Seeds pilot noise, augmentation phases and the split.
    pub seed: u64,
}

impl DatasetSpec {
    pub fn sub6_pilot(&self) -> PilotConfig {
        PilotConfig {
            snr_db: self.sub6_snr_db,
            active_antennas: self.sub6_band.num_antennas,
            pilot_fraction: self.sub6_pilot_fraction,
            rng_seed: self.seed,
        }
    }

    pub fn mmwave_pilot(&self) -> PilotConfig {
        PilotConfig {
            snr_db: self.pilot_snr_db,
            active_antennas: self.active_antennas,
            pilot_fraction: self.mmwave_pilot_fraction,
            rng_seed: self.seed,
        }
    }

    pub fn sub6_dim(&self) -> usize {
        2 * self.sub6_band.num_antennas * self.sub6_band.num_subcarriers
    }

    pub fn mmwave_dim(&self) -> usize {
        2 * self.active_antennas * self.mmwave_band.num_subcarriers
    }

    /// Number of rows including augmented copies.
    pub fn sample_count(&self, users: usize) -> Result<usize> {
        if !(self.aug_rate >= 1.0) || !self.aug_rate.is_finite() {
            return Err(invalid("augmentation rate must be >= 1"));
        }
        let total = self.aug_rate * users as f64;
        let rounded = libm::round(total);
        if (total - rounded).abs() > 1e-6 {
            return Err(invalid("augmentation rate times user count must be an integer"));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.sub6_band.validate()?;
        self.mmwave_band.validate()?;
        self.sub6_pilot().validate()?;
        self.mmwave_pilot().validate()?;
        if self.active_antennas == 0 || self.active_antennas > self.mmwave_band.num_antennas {
            return Err(invalid("active antennas must lie in [1, mmWave antennas]"));
        }
        if self.users < 2 {
            return Err(invalid("dataset needs at least two users"));
        }
        self.sample_count(self.users)?;
        if !self.data_snr_db.is_finite() {
            return Err(invalid("data SNR must be finite"));
        }
        Ok(())
    }
}

/// Provenance and shapes of a built dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub spec: DatasetSpec,
    pub users: usize,
    pub samples: usize,
    pub sub6_dim: usize,
    pub mmwave_dim: usize,
    pub num_beams: usize,
    pub feature_order: String,
    /// Normalizers, computed on the training users only.
    pub omega_sub6: f64,
    pub omega_mmwave: f64,
    pub train_users: Vec<u32>,
    pub validation_users: Vec<u32>,
}

/// Features, labels and per-user beam rates with their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: FeatureSet,
    pub rates: RateTable,
}

impl Dataset {
    pub fn train(&self) -> FeatureSet {
        self.features.partition(&self.manifest.train_users).0
    }

    pub fn validation(&self) -> FeatureSet {
        self.features.partition(&self.manifest.train_users).1
    }
}

/// Scenes `0..users` from the synthetic generator.
pub fn generate_scenes(params: &SceneParams, seed: u64, users: usize) -> Result<Vec<UserScene>> {
    (0..users as u64)
        .map(|u| channel::generate_scene(params, seed, u))
        .collect()
}

/// Ground-truth channels of one user, each band limited to its strongest
/// `num_paths` rays.
pub fn user_channels(
    scene: &UserScene,
    sub6: &BandConfig,
    mmwave: &BandConfig,
) -> Result<(ChannelMatrix, ChannelMatrix)> {
    let strongest = |rays: &[channel::RayPath], n: usize| {
        let mut r = rays.to_vec();
        r.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
        r.truncate(n);
        r
    };
    let hs = channel::synth_channel(&strongest(&scene.sub6_rays, sub6.num_paths), sub6)?;
    let hm = channel::synth_channel(&strongest(&scene.mmwave_rays, mmwave.num_paths), mmwave)?;
    Ok((hs, hm))
}

/// Runs the whole preprocessing chain: synthesis, pilot estimation, labels
/// from ground truth, optional delay transform, normalization on the
/// training users, stacking, then phase-rotated copies.
pub fn build_dataset(scenes: &[UserScene], spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let users = scenes.len();
    if users < 2 {
        return Err(invalid("dataset needs at least two users"));
    }
    let samples = spec.sample_count(users)?;
    let codebook = beams::dft_codebook(spec.mmwave_band.num_antennas)?;
    let data_snr = beams::db_to_linear(spec.data_snr_db);

    let mut truth_sub6 = Vec::with_capacity(users);
    let mut truth_mmwave = Vec::with_capacity(users);
    for scene in scenes {
        let (hs, hm) = user_channels(scene, &spec.sub6_band, &spec.mmwave_band)?;
        truth_sub6.push(hs);
        truth_mmwave.push(hm);
    }

    let mut rates = RateTable {
        num_beams: codebook.len(),
        rates: Vec::with_capacity(users * codebook.len()),
    };
    let mut labels = Vec::with_capacity(users);
    for h in &truth_mmwave {
        let row = beams::beam_rates(h, &codebook, data_snr)?;
        labels.push(beams::best_index(&row));
        rates.rates.extend(row.iter().map(|&r| r as f32));
    }

    let sub6_var = estimation::noise_variance_for_snr(&truth_sub6, spec.sub6_snr_db)?;
    let mmwave_var = estimation::noise_variance_for_snr(&truth_mmwave, spec.pilot_snr_db)?;

    let prepare = |h: ChannelMatrix| -> Result<ChannelMatrix> {
        if spec.sparsity {
            delay_transform(&h)
        } else {
            Ok(h)
        }
    };

    let mut est_sub6 = Vec::with_capacity(users);
    let mut est_mmwave = Vec::with_capacity(users);
    for (u, scene) in scenes.iter().enumerate() {
        let mut rng_s = rng::derive(spec.seed, scene.user_id, Stream::Sub6Noise);
        let mut rng_m = rng::derive(spec.seed, scene.user_id, Stream::MmwaveNoise);
        let hs = estimation::estimate_sub6(
            &truth_sub6[u],
            spec.sub6_pilot_fraction,
            sub6_var,
            &mut rng_s,
        )?;
        let hm = estimation::estimate_mmwave_partial(
            &truth_mmwave[u],
            spec.active_antennas,
            spec.mmwave_pilot_fraction,
            mmwave_var,
            &mut rng_m,
        )?;
        est_sub6.push(prepare(hs)?);
        est_mmwave.push(prepare(hm)?);
    }

    let all_users: Vec<u32> = (0..users as u32).collect();
    let (train_users, validation_users) = split_users(&all_users, spec.train_fraction, spec.seed)?;
    let omega_sub6 = global_normalizer(train_users.iter().map(|&u| &est_sub6[u as usize]))?;
    let omega_mmwave = global_normalizer(train_users.iter().map(|&u| &est_mmwave[u as usize]))?;

    let num_beams = codebook.len();
    let mut features = FeatureSet {
        sub6_dim: spec.sub6_dim(),
        mmwave_dim: spec.mmwave_dim(),
        num_beams,
        sub6: Vec::with_capacity(samples * spec.sub6_dim()),
        mmwave: Vec::with_capacity(samples * spec.mmwave_dim()),
        labels: Vec::with_capacity(samples * num_beams),
        source: Vec::with_capacity(samples),
        omega_sub6,
        omega_mmwave,
    };
    let mut push = |u: usize, hs: &ChannelMatrix, hm: &ChannelMatrix| -> Result<()> {
        let fs = to_real_features(hs, omega_sub6)?;
        let fm = to_real_features(hm, omega_mmwave)?;
        check_dim("sub-6GHz feature length", features.sub6_dim, fs.len())?;
        check_dim("mmWave feature length", features.mmwave_dim, fm.len())?;
        features.sub6.extend(fs.iter().map(|&x| x as f32));
        features.mmwave.extend(fm.iter().map(|&x| x as f32));
        let start = features.labels.len();
        features.labels.resize(start + num_beams, 0.0);
        features.labels[start + labels[u]] = 1.0;
        features.source.push(u as u32);
        Ok(())
    };

    for u in 0..users {
        push(u, &est_sub6[u], &est_mmwave[u])?;
    }
    for copy in 0..samples - users {
        let u = copy % users;
        let mut rng = rng::derive(spec.seed, copy as u64, Stream::Augment);
        let phi: f64 = rng.random_range(0.0..1.0);
        let chi: f64 = rng.random_range(0.0..1.0);
        let hm = augment_mmwave(&est_mmwave[u], phi);
        let hs = augment_sub6(&est_sub6[u], chi);
        push(u, &hs, &hm)?;
    }

    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        users,
        samples,
        sub6_dim: features.sub6_dim,
        mmwave_dim: features.mmwave_dim,
        num_beams,
        feature_order: FEATURE_ORDER.into(),
        omega_sub6,
        omega_mmwave,
        train_users,
        validation_users,
    };
    Ok(Dataset {
        manifest,
        features,
        rates,
    })
}
