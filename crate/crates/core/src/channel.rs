//! Geometric multi-band channel synthesis.
//!
//! A channel on subcarrier `k` is the ray sum
//! `h[k] = Σ_r g_r · exp(-j2π·k·τ_r·Δf) · a(ψ_r, θ_r)` over a uniform linear
//! array response `a`. Users are described by a [`UserScene`] holding the
//! rays seen in each band; mmWave rays reuse a subset of the sub-6GHz
//! geometry with their own gains.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// One propagation path as seen from the base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPath {
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
    /// Complex amplitude (linear).
    pub gain: Complex64,
    pub delay_s: f64,
}

impl RayPath {
    pub fn validate(&self) -> Result<()> {
        let angles_ok = |a: f64| a.is_finite() && a > -PI && a <= PI;
        if !angles_ok(self.azimuth_rad) || !angles_ok(self.elevation_rad) {
            return Err(invalid("ray angles must lie in (-pi, pi]"));
        }
        if !(self.delay_s.is_finite() && self.delay_s >= 0.0) {
            return Err(invalid("ray delay must be finite and non-negative"));
        }
        if !(self.gain.re.is_finite() && self.gain.im.is_finite()) {
            return Err(Error::NonFinite("ray gain"));
        }
        Ok(())
    }
}

/// Array and OFDM numerology of one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub carrier_ghz: f64,
    pub num_antennas: usize,
    /// Element spacing in wavelengths.
    pub spacing_wavelengths: f64,
    pub num_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub num_paths: usize,
}

impl BandConfig {
    /// 28 GHz, 64 antennas, 512 subcarriers at 0.5 MHz, 5 paths.
    pub const MMWAVE_REFERENCE: BandConfig = BandConfig {
        carrier_ghz: 28.0,
        num_antennas: 64,
        spacing_wavelengths: 0.5,
        num_subcarriers: 512,
        subcarrier_spacing_hz: 0.5e6,
        num_paths: 5,
    };

    /// 3.5 GHz, 4 antennas, 32 subcarriers at 20 kHz, 15 paths.
    pub const SUB6_REFERENCE: BandConfig = BandConfig {
        carrier_ghz: 3.5,
        num_antennas: 4,
        spacing_wavelengths: 0.5,
        num_subcarriers: 32,
        subcarrier_spacing_hz: 0.02e6,
        num_paths: 15,
    };

    /// The mmWave reference trimmed to 32 subcarriers for desk-scale runs.
    pub const MMWAVE_DESK: BandConfig = BandConfig {
        num_subcarriers: 32,
        ..Self::MMWAVE_REFERENCE
    };

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_subcarriers == 0 || self.num_paths == 0 {
            return Err(invalid(
                "band needs at least one antenna, subcarrier and path",
            ));
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return Err(invalid("antenna spacing must be positive"));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return Err(invalid("subcarrier spacing must be positive"));
        }
        Ok(())
    }
}

/// Which representation a [`ChannelMatrix`] currently holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    SpatialFrequency,
    SpatialDelay,
    AngularDelay,
}

/// Antennas × subcarriers complex matrix, stored row-major (subcarrier index
/// fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
    domain: Domain,
}

impl ChannelMatrix {
    pub fn zeros(rows: usize, cols: usize, domain: Domain) -> Self {
        Self {
            rows,
            cols,
            values: vec![Complex64::new(0.0, 0.0); rows * cols],
            domain,
        }
    }

    pub fn from_values(
        rows: usize,
        cols: usize,
        values: Vec<Complex64>,
        domain: Domain,
    ) -> Result<Self> {
        crate::error::check_dim("channel matrix", rows * cols, values.len())?;
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("channel matrix"));
        }
        Ok(Self {
            rows,
            cols,
            values,
            domain,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.values[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Channel vector `h[k]` across antennas.
    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.rows).map(|n| self.get(n, col)).collect()
    }

    pub(crate) fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Submatrix made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            if r >= self.rows {
                return Err(invalid("row index out of range"));
            }
            values.extend_from_slice(self.row(r));
        }
        Ok(Self {
            rows: rows.len(),
            cols: self.cols,
            values,
            domain: self.domain,
        })
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v.norm_sqr()).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Mean of `|h|²` over all entries.
    pub fn mean_power(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// Uniform linear array response; entry `n` is
/// `exp(j·2π·spacing·n·cos(elevation)·sin(azimuth))`.
pub fn steering_vector(
    azimuth_rad: f64,
    elevation_rad: f64,
    n_antennas: usize,
    spacing_wavelengths: f64,
) -> Vec<Complex64> {
    let spatial =
        2.0 * PI * spacing_wavelengths * libm::cos(elevation_rad) * libm::sin(azimuth_rad);
    (0..n_antennas)
        .map(|n| Complex64::from_polar(1.0, spatial * n as f64))
        .collect()
}

/// Spatial-frequency channel of `rays` in `band`.
pub fn synth_channel(rays: &[RayPath], band: &BandConfig) -> Result<ChannelMatrix> {
    band.validate()?;
    if rays.is_empty() {
        return Err(invalid("channel synthesis needs at least one ray"));
    }
    let (n_ant, n_sub) = (band.num_antennas, band.num_subcarriers);
    let mut h = ChannelMatrix::zeros(n_ant, n_sub, Domain::SpatialFrequency);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n_sub];
    for ray in rays {
        let step = -2.0 * PI * ray.delay_s * band.subcarrier_spacing_hz;
        if !(step * (n_sub - 1) as f64).is_finite()
            || !(ray.gain.re.is_finite() && ray.gain.im.is_finite())
        {
            return Err(Error::NonFinite("ray delay phase"));
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = ray.gain * Complex64::from_polar(1.0, step * k as f64);
        }
        let a = steering_vector(
            ray.azimuth_rad,
            ray.elevation_rad,
            n_ant,
            band.spacing_wavelengths,
        );
        for (n, an) in a.iter().enumerate() {
            let row = &mut h.values[n * n_sub..(n + 1) * n_sub];
            for (dst, c) in row.iter_mut().zip(&coeffs) {
                *dst += c * an;
            }
        }
    }
    if !h.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite("synthesized channel"));
    }
    Ok(h)
}

/// Rays of one user in both bands.
#[derive(Debug, Clone, PartialEq)]
pub struct UserScene {
    pub user_id: u64,
    pub sub6_rays: Vec<RayPath>,
    pub mmwave_rays: Vec<RayPath>,
}

impl UserScene {
    /// Checks ray ranges and that the mmWave geometry is a subset of the
    /// sub-6GHz one.
    pub fn validate(&self) -> Result<()> {
        if self.sub6_rays.is_empty() {
            return Err(invalid("user has no sub-6GHz rays"));
        }
        if self.mmwave_rays.is_empty() {
            return Err(invalid("user has no mmWave rays"));
        }
        if self.mmwave_rays.len() > self.sub6_rays.len() {
            return Err(invalid("more mmWave rays than sub-6GHz rays"));
        }
        for ray in self.sub6_rays.iter().chain(&self.mmwave_rays) {
            ray.validate()?;
        }
        for m in &self.mmwave_rays {
            let shared = self
                .sub6_rays
                .iter()
                .any(|s| s.azimuth_rad == m.azimuth_rad && s.delay_s == m.delay_s);
            if !shared {
                return Err(invalid(
                    "mmWave ray (azimuth, delay) does not match any sub-6GHz ray",
                ));
            }
        }
        Ok(())
    }
}

/// Knobs of the synthetic scene generator.
///
/// Each user gets a dominant line-of-sight path with uniformly drawn azimuth
/// and delay, plus scattered paths around it. Path power decays
/// exponentially with excess delay. The mmWave band keeps the earliest
/// `mmwave_paths` of the shared geometry with independently drawn gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub sub6_paths: usize,
    pub mmwave_paths: usize,
    /// Line-of-sight azimuth is uniform in `[-azimuth_range_rad, azimuth_range_rad]`.
    pub azimuth_range_rad: f64,
    /// Standard deviation of scattered path azimuths around the line of sight.
    pub angle_spread_rad: f64,
    pub elevation_min_rad: f64,
    pub elevation_max_rad: f64,
    /// Line-of-sight delay is uniform in `[min_delay_s, max_delay_s]`.
    pub min_delay_s: f64,
    pub max_delay_s: f64,
    /// Mean excess delay of scattered paths; also the power decay constant.
    pub delay_spread_s: f64,
    /// Rician factor: line-of-sight power over total scattered power, dB.
    pub sub6_los_k_db: f64,
    pub mmwave_los_k_db: f64,
    pub sub6_gain_scale: f64,
    pub mmwave_gain_scale: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            sub6_paths: 15,
            mmwave_paths: 5,
            azimuth_range_rad: PI / 3.0,
            angle_spread_rad: 0.6,
            elevation_min_rad: 0.0,
            elevation_max_rad: 0.25,
            min_delay_s: 0.1e-6,
            max_delay_s: 0.6e-6,
            delay_spread_s: 0.25e-6,
            sub6_los_k_db: 6.0,
            mmwave_los_k_db: 9.0,
            sub6_gain_scale: 1.0,
            mmwave_gain_scale: 1.0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.sub6_paths == 0 || self.mmwave_paths == 0 {
            return Err(invalid("path counts must be positive"));
        }
        if self.mmwave_paths > self.sub6_paths {
            return Err(invalid(
                "mmWave path count cannot exceed the sub-6GHz path count",
            ));
        }
        let finite = [
            self.azimuth_range_rad,
            self.angle_spread_rad,
            self.elevation_min_rad,
            self.elevation_max_rad,
            self.min_delay_s,
            self.max_delay_s,
            self.delay_spread_s,
            self.sub6_los_k_db,
            self.mmwave_los_k_db,
            self.sub6_gain_scale,
            self.mmwave_gain_scale,
        ];
        if !finite.iter().all(|v| v.is_finite()) {
            return Err(invalid("scene parameters must be finite"));
        }
        if !(0.0..=PI).contains(&self.azimuth_range_rad) || self.angle_spread_rad < 0.0 {
            return Err(invalid("azimuth range must lie in [0, pi], spread >= 0"));
        }
        if self.elevation_min_rad > self.elevation_max_rad
            || self.elevation_min_rad <= -PI / 2.0
            || self.elevation_max_rad >= PI / 2.0
        {
            return Err(invalid("elevation range must be ordered within (-pi/2, pi/2)"));
        }
        if self.min_delay_s < 0.0 || self.min_delay_s > self.max_delay_s {
            return Err(invalid("delay range must be ordered and non-negative"));
        }
        if self.delay_spread_s <= 0.0 {
            return Err(invalid("delay spread must be positive"));
        }
        if self.sub6_gain_scale <= 0.0 || self.mmwave_gain_scale <= 0.0 {
            return Err(invalid("gain scales must be positive"));
        }
        Ok(())
    }
}

/// Wraps an angle into `(-π, π]`.
fn wrap_angle(a: f64) -> f64 {
    let mut w = libm::remainder(a, 2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn complex_normal(rng: &mut rng::Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Gains for paths with the given excess delays; path 0 is the line of
/// sight. Scattered gains are normalised so their expected total power is
/// `scale²`, making `k_db` the usual Rician factor.
fn draw_gains(
    rng: &mut rng::Rng,
    excess: &[f64],
    spread: f64,
    k_db: f64,
    scale: f64,
) -> Vec<Complex64> {
    let k_lin = libm::pow(10.0, k_db / 10.0);
    // E[exp(-X/s)] = 1/2 for X ~ Exp(mean s)
    let scattered = excess.len().saturating_sub(1).max(1) as f64 / 2.0;
    let norm = scale / libm::sqrt(scattered);
    excess
        .iter()
        .enumerate()
        .map(|(r, &dt)| {
            if r == 0 {
                let phase = rng.random_range(0.0..2.0 * PI);
                Complex64::from_polar(scale * libm::sqrt(k_lin), phase)
            } else {
                complex_normal(rng) * (norm * libm::exp(-0.5 * dt / spread))
            }
        })
        .collect()
}

fn sort_by_gain(rays: &mut [RayPath]) {
    rays.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
}

/// Synthetic two-band scene for one user; a pure function of
/// `(params, seed, user_id)`.
pub fn generate_scene(params: &SceneParams, seed: u64, user_id: u64) -> Result<UserScene> {
    params.validate()?;
    let mut rng = rng::derive(seed, user_id, Stream::Scene);

    let los_azimuth = uniform(&mut rng, -params.azimuth_range_rad, params.azimuth_range_rad);
    let los_delay = uniform(&mut rng, params.min_delay_s, params.max_delay_s);
    let excess_dist = Exp::new(1.0 / params.delay_spread_s)
        .map_err(|_| invalid("delay spread must be positive"))?;

    // (azimuth, elevation, excess delay), path 0 is the line of sight
    let mut geometry = Vec::with_capacity(params.sub6_paths);
    for r in 0..params.sub6_paths {
        let elevation = uniform(&mut rng, params.elevation_min_rad, params.elevation_max_rad);
        if r == 0 {
            geometry.push((los_azimuth, elevation, 0.0));
        } else {
            let offset: f64 = StandardNormal.sample(&mut rng);
            let azimuth = wrap_angle(los_azimuth + params.angle_spread_rad * offset);
            let excess: f64 = excess_dist.sample(&mut rng);
            geometry.push((azimuth, elevation, excess));
        }
    }
    geometry[1..].sort_by(|a, b| a.2.total_cmp(&b.2));

    let excess: Vec<f64> = geometry.iter().map(|g| g.2).collect();
    let sub6_gains = draw_gains(
        &mut rng,
        &excess,
        params.delay_spread_s,
        params.sub6_los_k_db,
        params.sub6_gain_scale,
    );
    let mmwave_gains = draw_gains(
        &mut rng,
        &excess[..params.mmwave_paths],
        params.delay_spread_s,
        params.mmwave_los_k_db,
        params.mmwave_gain_scale,
    );

    let make = |gains: &[Complex64]| -> Vec<RayPath> {
        gains
            .iter()
            .zip(&geometry)
            .map(|(&gain, &(azimuth_rad, elevation_rad, dt))| RayPath {
                azimuth_rad,
                elevation_rad,
                gain,
                delay_s: los_delay + dt,
            })
            .collect()
    };
    let mut sub6_rays = make(&sub6_gains);
    let mut mmwave_rays = make(&mmwave_gains);
    sort_by_gain(&mut sub6_rays);
    sort_by_gain(&mut mmwave_rays);

    Ok(UserScene {
        user_id,
        sub6_rays,
        mmwave_rays,
    })
}
