//! TOML configuration. Every section has defaults, so an empty file (or no
//! file) reproduces the reference experiment.

use std::path::{Path, PathBuf};

use eisdrt::drt::{DEFAULT_LAMBDA_REL, DEFAULT_PAD_DECADES, DEFAULT_POINTS_PER_DECADE};
use eisdrt::estimator::DEFAULT_PERIODS;
use eisdrt::{ChannelConfig, CircuitParams, DrtOptions, ImpedanceModel, MultisineDesign, Regularizer};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Medium resistance of the synthetic suspensions (Ω).
pub const SAMPLE_R_M: f64 = 100.0;
/// Particle capacitance of the synthetic suspensions (F).
pub const SAMPLE_C_P: f64 = 10e-9;
/// Electrode capacitance of the synthetic suspensions (F).
pub const SAMPLE_C_E: f64 = 1e-6;

/// Suspension circuit whose particle branch relaxes with time constant `tau`
/// (s), `tau = C_p (R_m + R_p)`.
pub fn sample_circuit(tau: f64) -> eisdrt::Result<CircuitParams> {
    CircuitParams::new(SAMPLE_C_E, SAMPLE_R_M, tau / SAMPLE_C_P - SAMPLE_R_M, SAMPLE_C_P)
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ImpedanceModel,
    pub excitation: MultisineDesign,
    pub channel: ChannelConfig,
    pub periods: usize,
    /// When set, replaces both noise levels with the std that gives this
    /// SNR (dB) against the clean RMS of the respective record.
    pub snr_db: Option<f64>,
    /// Also write the time-domain records.
    pub write_records: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            model: sample_circuit(2.0e-6).expect("valid sample").into(),
            excitation: MultisineDesign::default(),
            channel: ChannelConfig::default(),
            periods: DEFAULT_PERIODS,
            snr_db: None,
            write_records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrtConfig {
    /// Spectrum CSV; the `--input` flag takes precedence.
    pub input: Option<PathBuf>,
    pub points_per_decade: usize,
    pub pad_decades: f64,
    pub lambda_rel: f64,
    /// Absolute λ, overriding `lambda_rel`.
    pub lambda: Option<f64>,
    pub nonneg: bool,
    pub include_series_capacitance: bool,
    pub regularizer: Regularizer,
    /// Absolute prominence threshold for reported peaks (Ω).
    pub min_prominence: f64,
    /// Prominence threshold as a fraction of max γ; the larger of the two
    /// thresholds applies.
    pub min_prominence_rel: f64,
}

impl Default for DrtConfig {
    fn default() -> Self {
        DrtConfig {
            input: None,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
            pad_decades: DEFAULT_PAD_DECADES,
            lambda_rel: DEFAULT_LAMBDA_REL,
            lambda: None,
            nonneg: true,
            include_series_capacitance: true,
            regularizer: Regularizer::SecondDifference,
            min_prominence: 0.0,
            min_prominence_rel: 0.05,
        }
    }
}

impl DrtConfig {
    pub fn options(&self) -> DrtOptions {
        DrtOptions {
            nonneg: self.nonneg,
            include_series_capacitance: self.include_series_capacitance,
            regularizer: self.regularizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// CSV with columns `tau_s,kappa_wtpct` and optionally `sample`.
    pub input: Option<PathBuf>,
    pub samples: Vec<ResultSample>,
    /// τ window searched for the calibration peak (s).
    pub tau_window: [f64; 2],
    /// Peaks below this prominence (Ω) are ignored.
    pub min_prominence: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig { input: None, samples: Vec::new(), tau_window: [1e-7, 1e-5], min_prominence: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultSample {
    pub name: Option<String>,
    pub result: PathBuf,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub name: String,
    /// Known concentration (wt.%).
    pub kappa: f64,
    pub model: ImpedanceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub samples: Vec<SampleSpec>,
    pub excitation: MultisineDesign,
    pub channel: ChannelConfig,
    pub periods: usize,
    pub snr_db: Option<f64>,
    pub drt: DrtConfig,
    pub tau_window: [f64; 2],
}

/// Sample names, concentrations (wt.%) and relaxation times (s) of the
/// reference suspension series.
pub const REFERENCE_SERIES: [(&str, f64, f64); 4] =
    [("C1", 0.1, 1.60e-6), ("C2", 0.5, 2.00e-6), ("C3", 1.0, 2.85e-6), ("C4", 1.5, 3.33e-6)];

impl Default for PipelineConfig {
    fn default() -> Self {
        let samples = REFERENCE_SERIES
            .iter()
            .map(|&(name, kappa, tau)| SampleSpec {
                name: name.into(),
                kappa,
                model: sample_circuit(tau).expect("valid sample").into(),
            })
            .collect();
        PipelineConfig {
            samples,
            excitation: MultisineDesign::default(),
            channel: ChannelConfig::default(),
            periods: DEFAULT_PERIODS,
            snr_db: Some(40.0),
            // 1.6 vs 2.0 µs is under a quarter decade apart
            drt: DrtConfig { points_per_decade: 20, ..DrtConfig::default() },
            tau_window: [1e-7, 1e-5],
        }
    }
}
