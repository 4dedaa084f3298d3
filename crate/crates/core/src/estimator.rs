//! Simulated potentiostat channel and the period-averaged impedance estimator.
//!
//! The channel is steady state: the output record is synthesized tone by
//! tone with complex gain `R_f / Z(jω_k)`, so a noiseless record carries the
//! model impedance exactly at every excited bin.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::circuit::{ImpedanceModel, ImpedanceSpectrum};
use crate::error::{Error, Result};
use crate::multisine::{render, render_period, tile, MultisineSpec, SignalRecord};

/// Periods averaged by default.
pub const DEFAULT_PERIODS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// TIA feedback resistor (Ω).
    pub r_f: f64,
    /// White-noise std added to the input record (V).
    pub noise_std_vi: f64,
    /// White-noise std added to the output record (V).
    pub noise_std_vo: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { r_f: 100.0, noise_std_vi: 0.0, noise_std_vo: 0.0, seed: 0 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_f.is_finite() && self.r_f > 0.0) {
            return Err(Error::Domain(format!("r_f must be positive, got {}", self.r_f)));
        }
        if !(self.noise_std_vi >= 0.0 && self.noise_std_vo >= 0.0)
            || !(self.noise_std_vi.is_finite() && self.noise_std_vo.is_finite())
        {
            return Err(Error::Domain("noise std values must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub v_i: SignalRecord,
    pub v_o: SignalRecord,
    pub channel: ChannelConfig,
    pub spec: MultisineSpec,
}

fn add_noise(samples: &mut [f64], std: f64, rng: &mut ChaCha8Rng) {
    if std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    for v in samples {
        *v += normal.sample(rng);
    }
}

/// Drives `model` with the multisine and records input and TIA output.
pub fn simulate_channel(
    spec: &MultisineSpec,
    periods: usize,
    model: &ImpedanceModel,
    cfg: &ChannelConfig,
) -> Result<MeasurementRecord> {
    cfg.validate()?;
    if periods == 0 {
        return Err(Error::Domain("periods must be at least 1".into()));
    }
    let mut out_tones = Vec::with_capacity(spec.tones().len());
    for t in spec.tones() {
        let z = model.impedance(t.freq)?;
        let mag = z.norm();
        if mag == 0.0 || !mag.is_finite() {
            return Err(Error::SingularChannel { freq_hz: t.freq });
        }
        let gain = cfg.r_f / mag;
        out_tones.push((t.bin, t.amplitude * gain, t.phase - z.arg()));
    }
    let n = spec.samples_per_period();
    let mut v_i = render(spec, periods)?;
    let mut v_o = SignalRecord {
        samples: tile(&render_period(out_tones.into_iter(), n), periods),
        sample_rate: spec.sample_rate(),
        periods,
    };

    let mut rng_i = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_i.set_stream(1);
    let mut rng_o = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_o.set_stream(2);
    add_noise(&mut v_i.samples, cfg.noise_std_vi, &mut rng_i);
    add_noise(&mut v_o.samples, cfg.noise_std_vo, &mut rng_o);

    Ok(MeasurementRecord { v_i, v_o, channel: *cfg, spec: spec.clone() })
}

fn check_record(record: &MeasurementRecord) -> Result<usize> {
    let n = record.spec.samples_per_period();
    let (vi, vo) = (&record.v_i, &record.v_o);
    if vi.samples.len() != vo.samples.len() || vi.sample_rate != vo.sample_rate {
        return Err(Error::Domain("input and output records differ in length or rate".into()));
    }
    if vi.periods == 0 || vi.samples.len() != vi.periods * n || vo.periods != vi.periods {
        return Err(Error::Domain(format!(
            "record of {} samples is not {} whole periods of {n}",
            vi.samples.len(),
            vi.periods
        )));
    }
    Ok(vi.periods)
}

/// Unnormalized DFT coefficients `X[k] = Σ x[j] e^{-2πi jk/N}` at the
/// excited bins, one row per period.
pub fn period_spectra(record: &SignalRecord, spec: &MultisineSpec) -> Vec<Vec<Complex64>> {
    let n = spec.samples_per_period();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    (0..record.periods)
        .map(|p| {
            for (b, &x) in buf.iter_mut().zip(record.period(p)) {
                *b = Complex64::new(x, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            spec.tones().iter().map(|t| buf[t.bin]).collect()
        })
        .collect()
}

fn mean_over_periods(rows: &[Vec<Complex64>], tone: usize) -> Complex64 {
    rows.iter().map(|r| r[tone]).sum::<Complex64>() / rows.len() as f64
}

/// `Ẑ(jω_k) = mean_p V_i^p(k) / (mean_p V_o^p(k) / R_f)` at every excited tone.
pub fn estimate_impedance(record: &MeasurementRecord) -> Result<ImpedanceSpectrum> {
    check_record(record)?;
    let spec = &record.spec;
    let vi = period_spectra(&record.v_i, spec);
    let vo = period_spectra(&record.v_o, spec);
    let n = spec.samples_per_period() as f64;
    let floor = 16.0 * f64::EPSILON * n * record.v_o.rms();

    let mut z = Vec::with_capacity(spec.tones().len());
    for (k, t) in spec.tones().iter().enumerate() {
        let num = mean_over_periods(&vi, k);
        let den = mean_over_periods(&vo, k) / record.channel.r_f;
        if den.norm() * record.channel.r_f <= floor {
            return Err(Error::Dropout { bin: t.bin, freq_hz: t.freq });
        }
        z.push(num / den);
    }
    Ok(ImpedanceSpectrum::from_parts(&spec.freqs(), &z)?
        .with_meta("estimator", "period-averaged DFT ratio")
        .with_meta("periods", record.v_i.periods.to_string()))
}

/// Noise std estimate of the output DFT at one excited bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinNoise {
    pub bin: usize,
    pub freq: f64,
    /// `sqrt(Σ_p |X_p - X̄|² / (P - 1))`, in DFT units (V·samples).
    pub std: f64,
}

/// Sample std of the per-period output DFT coefficients at each excited bin.
pub fn estimate_noise_floor(record: &MeasurementRecord) -> Result<Vec<BinNoise>> {
    let periods = check_record(record)?;
    if periods < 2 {
        return Err(Error::InsufficientData(format!("noise floor needs at least 2 periods, record has {periods}")));
    }
    let vo = period_spectra(&record.v_o, &record.spec);
    Ok(record
        .spec
        .tones()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let mean = mean_over_periods(&vo, k);
            let ss: f64 = vo.iter().map(|r| (r[k] - mean).norm_sqr()).sum();
            BinNoise { bin: t.bin, freq: t.freq, std: (ss / (periods - 1) as f64).sqrt() }
        })
        .collect())
}
