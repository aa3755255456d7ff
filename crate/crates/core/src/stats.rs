//! Periodicity statistics for photon arrival times.
//!
//! The finest-resolution statistic is the Rayleigh power in the first
//! harmonic at a frequency/drift pair. Coarser resolutions split the
//! observation span into `2^kappa` equal-length blocks and add the per-block
//! powers, which discards the phase relation between blocks and widens the
//! peak.

use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::ops::Range;

use rand::Rng;

use crate::{Error, Result};

/// Sorted photon arrival times (seconds) over an observation span `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonSeries {
    times: Vec<f64>,
    span: f64,
}

impl PhotonSeries {
    /// Sorts `times`; every time must be finite and inside `[0, span]`.
    pub fn new(mut times: Vec<f64>, span: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyPhotonSeries);
        }
        if !span.is_finite() || span <= 0.0 {
            return Err(Error::InvalidPhotonSeries("span must be positive and finite"));
        }
        if let Some(index) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                what: "arrival time",
                index,
            });
        }
        if times.iter().any(|&t| !(0.0..=span).contains(&t)) {
            return Err(Error::InvalidPhotonSeries("arrival time outside [0, span]"));
        }
        times.sort_by(f64::total_cmp);
        Ok(PhotonSeries { times, span })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Frequency (Hz) and linear frequency drift (s^-2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreqDrift {
    pub omega: f64,
    pub omega_dot: f64,
}

impl FreqDrift {
    pub fn new(omega: f64, omega_dot: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter("frequency must be positive"));
        }
        if !omega_dot.is_finite() {
            return Err(Error::InvalidParameter("drift must be finite"));
        }
        Ok(FreqDrift { omega, omega_dot })
    }

    /// Rotational phase in cycles at time `t`.
    #[inline]
    pub fn phase(&self, t: f64) -> f64 {
        self.omega * t + 0.5 * self.omega_dot * t * t
    }
}

/// Sinusoidally modulated source: arrival phase density is proportional to
/// `1 + theta * sin(2 pi phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub theta: f64,
    pub freq: FreqDrift,
    pub photons: usize,
    pub span: f64,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter("theta must lie in [0, 1)"));
        }
        if self.photons == 0 {
            return Err(Error::EmptyPhotonSeries);
        }
        if !(self.span.is_finite() && self.span > 0.0) {
            return Err(Error::InvalidParameter("span must be positive and finite"));
        }
        Ok(())
    }
}

#[inline]
fn unit_phasor(phase: f64) -> (f64, f64) {
    // Reduce first: phases reach 1e8 cycles and only the fraction matters.
    let frac = phase - phase.floor();
    let (s, c) = libm::sincos(TAU * frac);
    (c, s)
}

/// Photon index ranges of the `2^kappa` equal-length time blocks of a series.
///
/// Block `k` covers `[k T / 2^kappa, (k + 1) T / 2^kappa)`; the last block
/// also contains `t = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    kappa: u32,
    bounds: Vec<usize>,
}

impl BlockLayout {
    pub fn new(photons: &PhotonSeries, kappa: u32) -> Result<Self> {
        if kappa > 52 {
            return Err(Error::InvalidParameter("block exponent must be at most 52"));
        }
        let blocks = 1u64 << kappa;
        let scale = blocks as f64 / photons.span;
        let mut bounds = Vec::with_capacity(blocks as usize + 1);
        bounds.push(0);
        let mut current = 0u64;
        for (j, &t) in photons.times.iter().enumerate() {
            let k = ((t * scale).floor() as u64).min(blocks - 1);
            while current < k {
                bounds.push(j);
                current += 1;
            }
        }
        while (bounds.len() as u64) <= blocks {
            bounds.push(photons.len());
        }
        Ok(BlockLayout { kappa, bounds })
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn num_blocks(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn block(&self, k: usize) -> Range<usize> {
        self.bounds[k]..self.bounds[k + 1]
    }
}

/// Blocked power with a precomputed block layout for `photons`.
pub fn blocked_power_with(photons: &PhotonSeries, freq: FreqDrift, layout: &BlockLayout) -> f64 {
    let times = &photons.times;
    let mut total = 0.0;
    for k in 0..layout.num_blocks() {
        let (mut re, mut im) = (0.0, 0.0);
        for &t in &times[layout.block(k)] {
            let (c, s) = unit_phasor(freq.phase(t));
            re += c;
            im += s;
        }
        total += re * re + im * im;
    }
    2.0 * total / times.len() as f64
}

/// Blocked power `F^kappa`: per-block Rayleigh powers summed over `2^kappa`
/// equal-length blocks. `kappa = 0` is the plain Rayleigh power.
pub fn blocked_power(photons: &PhotonSeries, freq: FreqDrift, kappa: u32) -> Result<f64> {
    let layout = BlockLayout::new(photons, kappa)?;
    Ok(blocked_power_with(photons, freq, &layout))
}

/// Rayleigh power `F = (2/m) |sum_j exp(2 pi i phase_j)|^2`, in `[0, 2m]`.
pub fn rayleigh_power(photons: &PhotonSeries, freq: FreqDrift) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for &t in &photons.times {
        let (c, s) = unit_phasor(freq.phase(t));
        re += c;
        im += s;
    }
    2.0 * (re * re + im * im) / photons.len() as f64
}

/// Survival function of the chi-squared law with two degrees of freedom.
pub fn chi2_2_sf(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidParameter("chi-squared argument must be >= 0"));
    }
    Ok((-0.5 * x).exp())
}

/// Quantile of the chi-squared law with two degrees of freedom.
pub fn chi2_2_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter("probability must lie in [0, 1)"));
    }
    Ok(-2.0 * (-p).ln_1p())
}

/// Quantile at upper-tail probability `tail` (`quantile(1 - tail)` without
/// the cancellation in `1 - tail`).
pub fn chi2_2_upper_quantile(tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(Error::InvalidParameter("tail probability must lie in (0, 1]"));
    }
    Ok(-2.0 * tail.ln())
}

/// Draws `spec.photons` arrival times from the modulated density by
/// rejection against a uniform envelope. `theta = 0` gives uniform arrivals.
pub fn simulate_photons<R: Rng + ?Sized>(spec: &SignalSpec, rng: &mut R) -> Result<PhotonSeries> {
    spec.validate()?;
    let mut times = Vec::with_capacity(spec.photons);
    let envelope = 1.0 + spec.theta;
    while times.len() < spec.photons {
        let t = rng.random::<f64>() * spec.span;
        if spec.theta == 0.0 {
            times.push(t);
            continue;
        }
        let phase = spec.freq.phase(t);
        let density = 1.0 + spec.theta * (TAU * (phase - phase.floor())).sin();
        if rng.random::<f64>() * envelope < density {
            times.push(t);
        }
    }
    PhotonSeries::new(times, spec.span)
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and a
/// continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF of the chi-squared law with two degrees of freedom.
pub fn chi2_2_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-0.5 * x).exp_m1()
    }
}
