//! Pilot-based channel estimation for both bands.
//!
//! All pilots are unit symbols, so the LS estimate of a pilot subcarrier is
//! the channel plus noise. The mmWave side only sounds `Ñ_m` active
//! antennas, one training block per antenna, through a normalized DFT
//! training matrix, and inverts it with the conjugate transpose.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{invalid, Error, Result};

/// Pilot settings of one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Pilot SNR in dB; `+inf` means noiseless.
    pub snr_db: f64,
    /// Number of sounded antennas (`Ñ_m`). Ignored for the sub-6GHz band.
    pub active_antennas: usize,
    /// Fraction of subcarriers carrying pilots, in `(0, 1]`.
    pub pilot_fraction: f64,
    pub rng_seed: u64,
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() {
            return Err(invalid("pilot SNR is NaN"));
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction <= 1.0) {
            return Err(invalid("pilot fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Adds circularly-symmetric complex Gaussian noise of per-entry variance
/// `noise_variance` (split evenly between real and imaginary parts).
pub fn awgn<R: Rng + ?Sized>(
    values: &[Complex64],
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(invalid("noise variance must be finite and non-negative"));
    }
    if noise_variance == 0.0 {
        return Ok(values.to_vec());
    }
    let sigma = libm::sqrt(noise_variance / 2.0);
    Ok(values
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v + Complex64::new(re, im) * sigma
        })
        .collect())
}

/// Mean per-entry power over a set of ground-truth channels.
pub fn reference_power<'a, I>(channels: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a ChannelMatrix>,
{
    let (mut total, mut count) = (0.0, 0usize);
    for ch in channels {
        total += ch.values().iter().map(|v| v.norm_sqr()).sum::<f64>();
        count += ch.values().len();
    }
    if count == 0 {
        return Err(Error::Degenerate("no channel entries".into()));
    }
    Ok(total / count as f64)
}

/// Noise variance that puts `channels` at `snr_db` relative to their mean
/// per-entry power. Infinite SNR gives zero variance.
pub fn noise_variance_for_snr(channels: &[ChannelMatrix], snr_db: f64) -> Result<f64> {
    let power = reference_power(channels)?;
    noise_variance_from_power(power, snr_db)
}

pub fn noise_variance_from_power(power: f64, snr_db: f64) -> Result<f64> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::Degenerate("reference channel power is zero".into()));
    }
    if snr_db.is_nan() {
        return Err(invalid("SNR is NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(power / libm::pow(10.0, snr_db / 10.0))
}

/// Indices `⌊i·total/count⌋` for `i = 0..count`.
fn strided(total: usize, count: usize) -> Vec<usize> {
    (0..count).map(|i| i * total / count).collect()
}

/// Uniformly strided active antennas `⌊i·n_total/n_active⌋`.
pub fn select_active_antennas(n_total: usize, n_active: usize) -> Result<Vec<usize>> {
    if n_active == 0 || n_active > n_total {
        return Err(invalid("active antennas must lie in [1, total antennas]"));
    }
    Ok(strided(n_total, n_active))
}

/// Pilot subcarriers for `fraction` of `n_subcarriers`, on a uniform stride
/// starting at 0.
pub fn pilot_subcarriers(n_subcarriers: usize, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid("pilot fraction must lie in (0, 1]"));
    }
    let count = libm::floor(n_subcarriers as f64 * fraction + 1e-9) as usize;
    if count == 0 {
        return Err(invalid("pilot fraction leaves no pilot subcarrier"));
    }
    Ok(strided(n_subcarriers, count))
}

/// Replaces every non-pilot column with the nearest pilot column; ties go to
/// the lower pilot.
fn fill_from_pilots(h: &mut ChannelMatrix, pilots: &[usize]) {
    if pilots.len() == h.cols() {
        return;
    }
    let source: Vec<usize> = (0..h.cols())
        .map(|k| {
            *pilots
                .iter()
                .min_by_key(|&&p| (p.abs_diff(k), p))
                .expect("pilot set is non-empty")
        })
        .collect();
    for n in 0..h.rows() {
        for (k, &p) in source.iter().enumerate() {
            if p != k {
                let v = h.get(n, p);
                h.set(n, k, v);
            }
        }
    }
}

/// LS estimate of the sub-6GHz channel with unit pilots.
pub fn estimate_sub6<R: Rng + ?Sized>(
    truth: &ChannelMatrix,
    pilot_fraction: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let pilots = pilot_subcarriers(truth.cols(), pilot_fraction)?;
    let mut est = ChannelMatrix::zeros(truth.rows(), truth.cols(), truth.domain());
    for &k in &pilots {
        let noisy = awgn(&truth.column(k), noise_variance, rng)?;
        for (n, v) in noisy.into_iter().enumerate() {
            est.set(n, k, v);
        }
    }
    fill_from_pilots(&mut est, &pilots);
    Ok(est)
}

/// Normalized DFT matrix used to combine the active antennas during
/// training, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    size: usize,
    values: Vec<Complex64>,
}

impl TrainingMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.size + j]
    }

    /// `F·x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.size)
            .map(|i| {
                self.values[i * self.size..(i + 1) * self.size]
                    .iter()
                    .zip(x)
                    .map(|(f, v)| f * v)
                    .sum()
            })
            .collect()
    }

    /// `Fᴴ·y`.
    pub fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.size];
        for (i, yi) in y.iter().enumerate() {
            let row = &self.values[i * self.size..(i + 1) * self.size];
            for (o, f) in out.iter_mut().zip(row) {
                *o += f.conj() * yi;
            }
        }
        out
    }

    /// Largest entry deviation of `FᴴF` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.size;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let g: Complex64 = (0..n).map(|i| self.get(i, a).conj() * self.get(i, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// `F[i, j] = exp(-j2π·i·j/n)/√n`.
pub fn dft_training_matrix(n_active: usize) -> Result<TrainingMatrix> {
    if n_active == 0 {
        return Err(invalid("training matrix needs at least one antenna"));
    }
    let scale = 1.0 / libm::sqrt(n_active as f64);
    let mut values = Vec::with_capacity(n_active * n_active);
    for i in 0..n_active {
        for j in 0..n_active {
            // reduce i·j mod n first to keep the phase argument small
            let m = (i * j) % n_active;
            values.push(Complex64::from_polar(
                scale,
                -2.0 * PI * m as f64 / n_active as f64,
            ));
        }
    }
    Ok(TrainingMatrix {
        size: n_active,
        values,
    })
}

/// Estimate of the active-antenna rows of the mmWave channel
/// (`Ñ_m × K_m`). Each pilot subcarrier sees `y = F·h̃ + n` across the
/// `Ñ_m` training blocks and is recovered as `Fᴴ·y`.
pub fn estimate_mmwave_partial<R: Rng + ?Sized>(
    truth: &ChannelMatrix,
    active_antennas: usize,
    pilot_fraction: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let active = select_active_antennas(truth.rows(), active_antennas)?;
    let pilots = pilot_subcarriers(truth.cols(), pilot_fraction)?;
    let restricted = truth.select_rows(&active)?;
    let training = dft_training_matrix(active.len())?;
    let mut est = ChannelMatrix::zeros(active.len(), truth.cols(), truth.domain());
    for &k in &pilots {
        let received = awgn(&training.apply(&restricted.column(k)), noise_variance, rng)?;
        for (n, v) in training.apply_adjoint(&received).into_iter().enumerate() {
            est.set(n, k, v);
        }
    }
    fill_from_pilots(&mut est, &pilots);
    Ok(est)
}
