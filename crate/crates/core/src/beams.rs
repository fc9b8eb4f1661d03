//! DFT beam codebook, downlink achievable rate and exhaustive labelling.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::ChannelMatrix;
use crate::error::{check_dim, invalid, Error, Result};

/// Downlink data SNR used for labels, dB.
pub const DEFAULT_DATA_SNR_DB: f64 = 0.0;

pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Unit-modulus beams stored beam-major: beam `c` occupies
/// `[c·N, (c+1)·N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n_antennas: usize,
    beams: Vec<Complex64>,
}

impl Codebook {
    pub fn from_beams(n_antennas: usize, beams: Vec<Complex64>) -> Result<Self> {
        if n_antennas == 0 || beams.is_empty() || !beams.len().is_multiple_of(n_antennas) {
            return Err(invalid("codebook must hold at least one full beam"));
        }
        if beams.iter().any(|b| (b.norm() - 1.0).abs() > 1e-12) {
            return Err(invalid("codebook entries must have unit modulus"));
        }
        Ok(Self { n_antennas, beams })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn len(&self) -> usize {
        self.beams.len() / self.n_antennas
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, c: usize) -> &[Complex64] {
        &self.beams[c * self.n_antennas..(c + 1) * self.n_antennas]
    }
}

/// `N`-beam DFT codebook, `f_c[n] = exp(-j2π·n·c/N)`.
pub fn dft_codebook(n_antennas: usize) -> Result<Codebook> {
    if n_antennas == 0 {
        return Err(invalid("codebook needs at least one antenna"));
    }
    let n = n_antennas;
    let mut beams = Vec::with_capacity(n * n);
    for c in 0..n {
        for a in 0..n {
            let m = (a * c) % n;
            beams.push(Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64));
        }
    }
    Codebook::from_beams(n, beams)
}

/// Index of the chosen beam together with the codebook size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamLabel {
    pub index: usize,
    pub size: usize,
}

impl BeamLabel {
    pub fn new(index: usize, size: usize) -> Result<Self> {
        if index >= size {
            return Err(invalid("beam index outside the codebook"));
        }
        Ok(Self { index, size })
    }

    pub fn one_hot(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.size];
        t[self.index] = 1.0;
        t
    }
}

/// `Σ_k log₂(1 + snr·|h[k]ᵀ f|²)` with the plain (non-conjugated) product.
pub fn achievable_rate(channel: &ChannelMatrix, beam: &[Complex64], snr_linear: f64) -> Result<f64> {
    check_dim("beam length", channel.rows(), beam.len())?;
    if !(snr_linear > 0.0) || !snr_linear.is_finite() {
        return Err(invalid("data SNR must be positive"));
    }
    let mut gains = vec![Complex64::new(0.0, 0.0); channel.cols()];
    for (n, f) in beam.iter().enumerate() {
        for (g, h) in gains.iter_mut().zip(channel.row(n)) {
            *g += h * f;
        }
    }
    Ok(gains
        .iter()
        .map(|g| libm::log2(1.0 + snr_linear * g.norm_sqr()))
        .sum())
}

/// Rate of every codebook beam on `channel`.
pub fn beam_rates(channel: &ChannelMatrix, codebook: &Codebook, snr_linear: f64) -> Result<Vec<f64>> {
    (0..codebook.len())
        .map(|c| achievable_rate(channel, codebook.beam(c), snr_linear))
        .collect()
}

/// First index of the maximum; NaN entries never win.
pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Rates closer than this (relative) to the best count as tied.
pub const RATE_TIE_RTOL: f64 = 1e-12;

/// Lowest index whose rate ties the maximum; rounding noise between
/// mathematically equal rates does not break the tie.
pub fn best_index(rates: &[f64]) -> usize {
    let best = rates[argmax_first(rates)];
    rates
        .iter()
        .position(|&r| r >= best - RATE_TIE_RTOL * best.abs())
        .unwrap_or(0)
}

/// Rate-optimal beam by exhaustive search; ties go to the lowest index.
pub fn best_beam(channel: &ChannelMatrix, codebook: &Codebook, snr_linear: f64) -> Result<BeamLabel> {
    let rates = beam_rates(channel, codebook, snr_linear)?;
    BeamLabel::new(best_index(&rates), codebook.len())
}

/// Rate of `predicted` over the optimal rate. A zero channel counts as 1.
pub fn rate_ratio(
    channel: &ChannelMatrix,
    predicted: BeamLabel,
    codebook: &Codebook,
    snr_linear: f64,
) -> Result<f64> {
    check_dim("label size", codebook.len(), predicted.size)?;
    let rates = beam_rates(channel, codebook, snr_linear)?;
    ratio_from_rates(&rates, predicted.index)
}

/// Same as [`rate_ratio`] from precomputed per-beam rates.
pub fn ratio_from_rates(rates: &[f64], predicted: usize) -> Result<f64> {
    let best = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let got = *rates
        .get(predicted)
        .ok_or_else(|| invalid("predicted beam outside the codebook"))?;
    if !best.is_finite() {
        return Err(Error::NonFinite("beam rates"));
    }
    if best <= 0.0 {
        return Ok(1.0);
    }
    Ok(got / best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{steering_vector, synth_channel, BandConfig, Domain, RayPath};

    fn column_channel(h: &[Complex64]) -> ChannelMatrix {
        ChannelMatrix::from_values(h.len(), 1, h.to_vec(), Domain::SpatialFrequency).unwrap()
    }

    #[test]
    fn dft_codebook_shape() {
        let cb = dft_codebook(4).unwrap();
        assert_eq!(cb.len(), 4);
        assert!(cb.beam(0).iter().all(|v| (v - 1.0).norm() < 1e-15));
        for a in 0..4 {
            for b in 0..4 {
                let ip: Complex64 = cb
                    .beam(a)
                    .iter()
                    .zip(cb.beam(b))
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let target = if a == b { 4.0 } else { 0.0 };
                assert!((ip - target).norm() < 1e-12);
            }
        }
        assert_eq!(dft_codebook(64).unwrap().len(), 64);
    }

    #[test]
    fn rate_examples() {
        let zero = ChannelMatrix::zeros(2, 3, Domain::SpatialFrequency);
        let f = [Complex64::new(1.0, 0.0); 2];
        assert_eq!(achievable_rate(&zero, &f, 1.0).unwrap(), 0.0);

        let h = column_channel(&[Complex64::new(1.0, 0.0); 2]);
        let r = achievable_rate(&h, &f, 1.0).unwrap();
        assert!((r - libm::log2(5.0)).abs() < 1e-12);
        assert!((r - 2.3219).abs() < 1e-4);

        assert!(achievable_rate(&h, &f[..1], 1.0).is_err());
    }

    #[test]
    fn rate_ignores_global_phase() {
        let h = column_channel(&[Complex64::new(0.3, -0.2), Complex64::new(-1.0, 0.5)]);
        let f = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let rot = h.scaled(Complex64::from_polar(1.0, 1.234));
        let a = achievable_rate(&h, &f, 2.0).unwrap();
        let b = achievable_rate(&rot, &f, 2.0).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn thirty_degree_ray_picks_beam_two() {
        let band = BandConfig {
            carrier_ghz: 28.0,
            num_antennas: 8,
            spacing_wavelengths: 0.5,
            num_subcarriers: 1,
            subcarrier_spacing_hz: 1e6,
            num_paths: 1,
        };
        let ray = RayPath {
            azimuth_rad: PI / 6.0,
            elevation_rad: 0.0,
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
        };
        let h = synth_channel(&[ray], &band).unwrap();
        let cb = dft_codebook(8).unwrap();
        assert_eq!(best_beam(&h, &cb, 1.0).unwrap().index, 2);
    }

    #[test]
    fn matched_channel_picks_its_beam() {
        let cb = dft_codebook(16).unwrap();
        for c in 0..16 {
            let h: Vec<Complex64> = cb.beam(c).iter().map(|v| v.conj()).collect();
            assert_eq!(best_beam(&column_channel(&h), &cb, 1.0).unwrap().index, c);
        }
    }

    #[test]
    fn ratio_edge_cases() {
        let cb = dft_codebook(4).unwrap();
        let zero = ChannelMatrix::zeros(4, 2, Domain::SpatialFrequency);
        assert_eq!(rate_ratio(&zero, BeamLabel::new(3, 4).unwrap(), &cb, 1.0).unwrap(), 1.0);

        let a = steering_vector(0.3, 0.0, 4, 0.5);
        let h = column_channel(&a);
        let best = best_beam(&h, &cb, 1.0).unwrap();
        assert_eq!(rate_ratio(&h, best, &cb, 1.0).unwrap(), 1.0);
        let other = BeamLabel::new((best.index + 1) % 4, 4).unwrap();
        assert!(rate_ratio(&h, other, &cb, 1.0).unwrap() < 1.0);
    }

    #[test]
    fn ratio_of_ninety_percent_beam() {
        // beam 0 gets rate 1 (|g|^2 = 1), beam 1 gets rate 0.9 (|g|^2 = 2^0.9 - 1)
        // with h = [x, y]: beam0 gain x + y, beam1 gain x - y (N = 2 DFT).
        let g1 = libm::sqrt(libm::pow(2.0, 0.9) - 1.0);
        let (x, y) = ((1.0 + g1) / 2.0, (1.0 - g1) / 2.0);
        let h = column_channel(&[Complex64::new(x, 0.0), Complex64::new(y, 0.0)]);
        let cb = dft_codebook(2).unwrap();
        let rates = beam_rates(&h, &cb, 1.0).unwrap();
        assert!((rates[0] - 1.0).abs() < 1e-12 && (rates[1] - 0.9).abs() < 1e-12);
        let r = rate_ratio(&h, BeamLabel::new(1, 2).unwrap(), &cb, 1.0).unwrap();
        assert!((r - 0.9).abs() < 1e-9);
    }

    #[test]
    fn ties_break_low() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_first(&[0.0, 0.0]), 0);
        assert_eq!(argmax_first(&[1.0, 1.0 + 1e-15]), 1);
        assert_eq!(best_index(&[1.0, 1.0 + 1e-15]), 0);
        assert_eq!(best_index(&[1.0, 1.0 + 1e-9]), 1);
        assert_eq!(BeamLabel::new(2, 4).unwrap().one_hot(), vec![0.0, 0.0, 1.0, 0.0]);
    }
}
