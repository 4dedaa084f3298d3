//! Random-phase multisine excitation on a coherent sampling grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::circuit::log_frequencies;
use crate::error::{Error, Result};

/// One excited tone. `freq` is always `bin * sample_rate / samples_per_period`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub bin: usize,
    pub freq: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisineSpec {
    tones: Vec<Tone>,
    sample_rate: f64,
    samples_per_period: usize,
    seed: u64,
}

/// Inputs to [`design_multisine`]. Defaults reproduce the reference setup:
/// 52 tones of 0.1 V between 1 kHz and 1 MHz, sampled at 16 MHz with 16384
/// samples per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultisineDesign {
    pub f_min: f64,
    pub f_max: f64,
    pub n_tones: usize,
    pub sample_rate: f64,
    pub samples_per_period: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for MultisineDesign {
    fn default() -> Self {
        MultisineDesign {
            f_min: 1e3,
            f_max: 1e6,
            n_tones: 52,
            sample_rate: 16e6,
            samples_per_period: 16384,
            amplitude: 0.1,
            seed: 1,
        }
    }
}

fn bin_freq(bin: usize, sample_rate: f64, n: usize) -> f64 {
    bin as f64 * sample_rate / n as f64
}

/// Places `n_tones` tones on distinct DFT bins inside `[f_min, f_max]`.
///
/// Target frequencies are log-spaced and rounded to the nearest bin that
/// lies inside the band; collisions move up to the next free bin, and a
/// final downward pass keeps the top of the set inside the band.
pub fn design_multisine(d: &MultisineDesign) -> Result<MultisineSpec> {
    let n = d.samples_per_period;
    if !(d.sample_rate.is_finite() && d.sample_rate > 0.0) || n < 2 {
        return Err(Error::Design(format!(
            "need sample_rate > 0 and samples_per_period >= 2 (got {}, {n})",
            d.sample_rate
        )));
    }
    if !(d.f_min > 0.0 && d.f_min <= d.f_max && d.f_max < d.sample_rate / 2.0) {
        return Err(Error::Design(format!(
            "need 0 < f_min <= f_max < sample_rate/2 (got {}, {}, {})",
            d.f_min, d.f_max, d.sample_rate
        )));
    }
    if d.n_tones == 0 {
        return Err(Error::Design("n_tones must be at least 1".into()));
    }
    if d.f_min == d.f_max && d.n_tones > 1 {
        return Err(Error::Design("f_min == f_max only admits a single tone".into()));
    }
    if !(d.amplitude.is_finite() && d.amplitude > 0.0) {
        return Err(Error::Design(format!("amplitude must be positive, got {}", d.amplitude)));
    }

    let df = d.sample_rate / n as f64;
    // Tolerate round-off when a band edge sits exactly on a bin.
    let lo = ((d.f_min / df) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let hi_raw = ((d.f_max / df) * (1.0 + 1e-12)).floor() as usize;
    let hi = hi_raw.min((n - 1) / 2);
    if hi < lo || hi - lo + 1 < d.n_tones {
        return Err(Error::Design(format!(
            "{} tones requested but only {} bins lie in [{}, {}] Hz at spacing {df} Hz",
            d.n_tones,
            if hi < lo { 0 } else { hi - lo + 1 },
            d.f_min,
            d.f_max
        )));
    }

    let targets = log_frequencies(d.f_min, d.f_max, d.n_tones);
    let mut bins: Vec<usize> = Vec::with_capacity(d.n_tones);
    for f in targets {
        let nearest = ((f / df).round() as usize).clamp(lo, hi);
        let b = match bins.last() {
            Some(&prev) if nearest <= prev => prev + 1,
            _ => nearest,
        };
        bins.push(b);
    }
    let mut ceiling = hi;
    for b in bins.iter_mut().rev() {
        *b = (*b).min(ceiling);
        ceiling = b.saturating_sub(1);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let tones = bins
        .into_iter()
        .map(|bin| {
            // u in [0, 1) maps to a phase in (0, 2π]
            let u: f64 = rng.random();
            Tone { bin, freq: bin_freq(bin, d.sample_rate, n), amplitude: d.amplitude, phase: 2.0 * PI * (1.0 - u) }
        })
        .collect();

    MultisineSpec::new(tones, d.sample_rate, n, d.seed)
}

impl MultisineSpec {
    /// Builds a spec from explicit tones, checking coherence and ranges.
    pub fn new(mut tones: Vec<Tone>, sample_rate: f64, samples_per_period: usize, seed: u64) -> Result<Self> {
        if tones.is_empty() {
            return Err(Error::Design("at least one tone is required".into()));
        }
        tones.sort_by_key(|t| t.bin);
        for (i, t) in tones.iter().enumerate() {
            if i > 0 && t.bin == tones[i - 1].bin {
                return Err(Error::Design(format!("duplicate bin {}", t.bin)));
            }
            if t.bin == 0 || 2 * t.bin >= samples_per_period {
                return Err(Error::Design(format!("bin {} is outside (0, N/2)", t.bin)));
            }
            let exact = bin_freq(t.bin, sample_rate, samples_per_period);
            if t.freq != exact {
                return Err(Error::Design(format!(
                    "tone at {} Hz is not coherent with bin {} ({exact} Hz)",
                    t.freq, t.bin
                )));
            }
            if !(t.amplitude.is_finite() && t.amplitude > 0.0) {
                return Err(Error::Design(format!("tone {i}: amplitude must be positive")));
            }
            if !(t.phase > 0.0 && t.phase <= 2.0 * PI) {
                return Err(Error::Design(format!("tone {i}: phase {} outside (0, 2π]", t.phase)));
            }
        }
        Ok(MultisineSpec { tones, sample_rate, samples_per_period, seed })
    }

    pub fn tones(&self) -> &[Tone] {
        &self.tones
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples_per_period(&self) -> usize {
        self.samples_per_period
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.tones.iter().map(|t| t.freq).collect()
    }

    /// Bin spacing `sample_rate / samples_per_period` (Hz).
    pub fn resolution(&self) -> f64 {
        self.sample_rate / self.samples_per_period as f64
    }

    /// Same tones with every amplitude multiplied by `gain`.
    pub fn with_amplitude_scale(&self, gain: f64) -> Result<Self> {
        let tones = self.tones.iter().map(|t| Tone { amplitude: t.amplitude * gain, ..*t }).collect();
        Self::new(tones, self.sample_rate, self.samples_per_period, self.seed)
    }

    /// Mean power `Σ A_k² / 2` (V²).
    pub fn power(&self) -> f64 {
        self.tones.iter().map(|t| 0.5 * t.amplitude * t.amplitude).sum()
    }
}

/// A uniformly sampled record spanning an integer number of periods.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub periods: usize,
}

impl SignalRecord {
    pub fn samples_per_period(&self) -> usize {
        self.samples.len() / self.periods.max(1)
    }

    /// Borrowed view of period `p` (0-based).
    pub fn period(&self, p: usize) -> &[f64] {
        let n = self.samples_per_period();
        &self.samples[p * n..(p + 1) * n]
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// One period of `Σ A_k cos(2π k j / N + φ_k)`, synthesized with an inverse
/// FFT from the half-amplitude lines `X[k] = A/2·e^{iφ}` and their mirrors.
pub(crate) fn render_period(tones: impl Iterator<Item = (usize, f64, f64)>, n: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (bin, amp, phase) in tones {
        let line = Complex64::from_polar(0.5 * amp, phase);
        buf[bin] += line;
        buf[n - bin] += line.conj();
    }
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

pub(crate) fn tile(period: &[f64], periods: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(period.len() * periods);
    for _ in 0..periods {
        out.extend_from_slice(period);
    }
    out
}

pub fn render(spec: &MultisineSpec, periods: usize) -> Result<SignalRecord> {
    if periods == 0 {
        return Err(Error::Domain("periods must be at least 1".into()));
    }
    let one = render_period(spec.tones.iter().map(|t| (t.bin, t.amplitude, t.phase)), spec.samples_per_period);
    Ok(SignalRecord { samples: tile(&one, periods), sample_rate: spec.sample_rate, periods })
}

/// Peak-to-RMS ratio of a record.
pub fn crest_factor(record: &SignalRecord) -> Result<f64> {
    if record.samples.is_empty() {
        return Err(Error::Domain("empty record".into()));
    }
    let r = record.rms();
    if r == 0.0 {
        return Err(Error::Domain("crest factor of an all-zero record is undefined".into()));
    }
    let peak = record.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(peak / r)
}
