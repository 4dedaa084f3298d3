use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eisdrt::{
    build_tau_grid, design_multisine, estimate_impedance, find_peaks, fit_drt, fit_drt_relative, fit_linear,
    simulate_channel, CalibrationPoint, ChannelConfig, DrtResult, ImpedanceModel, ImpedanceSpectrum, MeasurementRecord,
    MultisineDesign, Peak,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CalibrateConfig, DrtConfig, PipelineConfig, SimulateConfig};
use crate::error::{data_error, CliError, Result};
use crate::files::{
    format_float, parse_calibration_csv, read_bytes, read_spectrum, sha256_hex, spectrum_to_csv, write_atomic,
    write_json, CalibrationFile, PeakRecord, ResultFile, SCHEMA_VERSION,
};
use crate::plot;

/// Flags shared by every command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides the noise seed of the configuration.
    pub seed: Option<u64>,
    pub plot: bool,
}

pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const RESULT_FILE: &str = "drt.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Noise levels giving `snr_db` against the clean RMS of each record.
pub fn noise_for_snr(
    spec: &eisdrt::MultisineSpec,
    model: &ImpedanceModel,
    channel: &ChannelConfig,
    snr_db: f64,
) -> Result<ChannelConfig> {
    if !snr_db.is_finite() {
        return Err(CliError::Config(format!("snr_db must be finite, got {snr_db}")));
    }
    let clean_cfg = ChannelConfig { noise_std_vi: 0.0, noise_std_vo: 0.0, ..*channel };
    let clean = simulate_channel(spec, 1, model, &clean_cfg)?;
    let k = 10f64.powf(-snr_db / 20.0);
    Ok(ChannelConfig { noise_std_vi: clean.v_i.rms() * k, noise_std_vo: clean.v_o.rms() * k, ..*channel })
}

pub struct Measurement {
    pub spectrum: ImpedanceSpectrum,
    pub record: MeasurementRecord,
}

pub fn measure(
    model: &ImpedanceModel,
    excitation: &MultisineDesign,
    channel: &ChannelConfig,
    periods: usize,
    snr_db: Option<f64>,
) -> Result<Measurement> {
    model.validate()?;
    channel.validate()?;
    let spec = design_multisine(excitation)?;
    let channel = match snr_db {
        Some(snr) => noise_for_snr(&spec, model, channel, snr)?,
        None => *channel,
    };
    let record = simulate_channel(&spec, periods, model, &channel)?;
    let spectrum = estimate_impedance(&record)?.with_meta("model", model.describe());
    Ok(Measurement { spectrum, record })
}

fn records_csv(rec: &MeasurementRecord) -> String {
    let mut out = String::from("sample,v_i_volt,v_o_volt\n");
    for (i, (a, b)) in rec.v_i.samples.iter().zip(&rec.v_o.samples).enumerate() {
        let _ = writeln!(out, "{i},{},{}", format_float(*a), format_float(*b));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub spectrum: ImpedanceSpectrum,
    pub spectrum_path: PathBuf,
    pub records_path: Option<PathBuf>,
    pub channel: ChannelConfig,
}

pub fn cmd_simulate(cfg: &SimulateConfig, opts: &RunOptions) -> Result<SimulateOutput> {
    let mut channel = cfg.channel;
    if let Some(seed) = opts.seed {
        channel.seed = seed;
    }
    let m = measure(&cfg.model, &cfg.excitation, &channel, cfg.periods, cfg.snr_db)?;
    let spectrum_path = opts.out.join(SPECTRUM_FILE);
    write_atomic(&spectrum_path, spectrum_to_csv(&m.spectrum).as_bytes())?;
    let records_path = if cfg.write_records {
        let p = opts.out.join(RECORDS_FILE);
        write_atomic(&p, records_csv(&m.record).as_bytes())?;
        Some(p)
    } else {
        None
    };
    if opts.plot {
        let chart = plot::nyquist_chart(&cfg.model.describe(), &m.spectrum);
        write_atomic(&opts.out.join("nyquist.svg"), plot::render(&chart).as_bytes())?;
    }
    Ok(SimulateOutput { spectrum: m.spectrum, spectrum_path, records_path, channel: m.record.channel })
}

/// Fits the DRT and picks peaks according to `cfg`.
pub fn analyze(spectrum: &ImpedanceSpectrum, cfg: &DrtConfig) -> Result<(DrtResult, Vec<Peak>)> {
    if spectrum.len() < 2 {
        return Err(CliError::Data(format!("need at least 2 frequencies, got {}", spectrum.len())));
    }
    let freqs = spectrum.freqs();
    let grid = build_tau_grid(freqs[0], freqs[freqs.len() - 1], cfg.points_per_decade, cfg.pad_decades)?;
    let result = match cfg.lambda {
        Some(lambda) => fit_drt(spectrum, &grid, lambda, &cfg.options()),
        None => fit_drt_relative(spectrum, &grid, cfg.lambda_rel, &cfg.options()),
    }
    .map_err(data_error)?;
    let gmax = result.gamma.iter().copied().fold(0.0, f64::max);
    let threshold = cfg.min_prominence.max(cfg.min_prominence_rel * gmax);
    let peaks = find_peaks(&result, threshold);
    Ok((result, peaks))
}

fn config_echo<T: Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("serializable")
}

fn write_result(
    dir: &Path,
    title: &str,
    result: &DrtResult,
    peaks: &[Peak],
    input_sha256: String,
    cfg: &DrtConfig,
    plot_it: bool,
) -> Result<ResultFile> {
    let file = ResultFile::new(result, peaks, input_sha256, config_echo(cfg));
    write_json(&dir.join(RESULT_FILE), &file)?;
    if plot_it {
        let chart = plot::drt_chart(title, result, peaks);
        write_atomic(&dir.join("drt.svg"), plot::render(&chart).as_bytes())?;
    }
    Ok(file)
}

pub fn cmd_drt(cfg: &DrtConfig, input: Option<&Path>, opts: &RunOptions) -> Result<ResultFile> {
    let input = input
        .or(cfg.input.as_deref())
        .ok_or_else(|| CliError::Config("drt needs an input spectrum (--input or `input` in the config)".into()))?;
    let (spectrum, hash) = read_spectrum(input)?;
    let (result, peaks) = analyze(&spectrum, cfg).map_err(|e| e.context(input.display()))?;
    write_result(&opts.out, &input.display().to_string(), &result, &peaks, hash, cfg, opts.plot)
}

/// Smallest-τ peak inside `window` with at least `min_prominence`.
pub fn select_peak(peaks: &[PeakRecord], window: [f64; 2], min_prominence: f64) -> Option<&PeakRecord> {
    peaks
        .iter()
        .filter(|p| p.tau_s >= window[0] && p.tau_s <= window[1] && p.prominence_ohm >= min_prominence)
        .min_by(|a, b| a.tau_s.total_cmp(&b.tau_s))
}

fn check_window(window: [f64; 2]) -> Result<()> {
    if !(window[0] > 0.0 && window[1] > window[0] && window[1].is_finite()) {
        return Err(CliError::Config(format!("tau_window must satisfy 0 < lo < hi, got {window:?}")));
    }
    Ok(())
}

fn peak_point(
    name: &str,
    peaks: &[PeakRecord],
    kappa: f64,
    window: [f64; 2],
    min_prom: f64,
) -> Result<CalibrationPoint> {
    let peak = select_peak(peaks, window, min_prom).ok_or_else(|| {
        CliError::Data(format!("sample {name}: no peak in the τ window [{:e}, {:e}] s", window[0], window[1]))
    })?;
    CalibrationPoint::new(peak.tau_s, kappa, name).map_err(|e| CliError::Data(format!("sample {name}: {e}")))
}

fn calibrate_points(points: &[CalibrationPoint], out: &Path, plot_it: bool) -> Result<CalibrationFile> {
    let model = fit_linear(points)?;
    let file = CalibrationFile::new(points, &model);
    write_json(&out.join(CALIBRATION_FILE), &file)?;
    if plot_it {
        let chart = plot::calibration_chart(points, &model);
        write_atomic(&out.join("calibration.svg"), plot::render(&chart).as_bytes())?;
    }
    Ok(file)
}

/// Calibrates from a `tau_s,kappa_wtpct` CSV (`input`, or the config's
/// `input`) or from the DRT results listed in the config.
pub fn cmd_calibrate(cfg: &CalibrateConfig, input: Option<&Path>, opts: &RunOptions) -> Result<CalibrationFile> {
    check_window(cfg.tau_window)?;
    let mut points = Vec::new();
    if let Some(path) = input.or(cfg.input.as_deref()) {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
        points.extend(parse_calibration_csv(&text).map_err(|e| e.context(path.display()))?);
    }
    for s in &cfg.samples {
        let name = s.name.clone().unwrap_or_else(|| {
            s.result.file_stem().map_or_else(|| s.result.display().to_string(), |f| f.to_string_lossy().into_owned())
        });
        let file = ResultFile::read(&s.result)?;
        points.push(peak_point(&name, &file.peaks, s.kappa, cfg.tau_window, cfg.min_prominence)?);
    }
    if points.is_empty() {
        return Err(CliError::Config("calibrate needs an input CSV or a list of result samples".into()));
    }
    calibrate_points(&points, &opts.out, opts.plot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageState {
    Pending,
    Done,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleState {
    pub sample: String,
    pub simulate: StageState,
    pub drt: StageState,
    pub peak: StageState,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub complete: bool,
    pub samples: Vec<SampleState>,
    pub calibration: StageState,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sample: String,
    pub kappa_wtpct: f64,
    pub tau_us: f64,
    #[serde(skip)]
    pub tau_s: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub summary: Vec<SummaryRow>,
    pub calibration: Option<CalibrationFile>,
    pub manifest: Manifest,
}

fn check_samples(cfg: &PipelineConfig) -> Result<()> {
    if cfg.samples.is_empty() {
        return Err(CliError::Config("pipeline needs at least one sample".into()));
    }
    let mut seen = BTreeSet::new();
    for s in &cfg.samples {
        let ok = !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !ok || s.name.starts_with('.') {
            return Err(CliError::Config(format!("sample name {:?} must be a plain file name", s.name)));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(CliError::Config(format!("duplicate sample name {:?}", s.name)));
        }
        if !(s.kappa.is_finite() && s.kappa >= 0.0) {
            return Err(CliError::Config(format!("sample {}: kappa must be >= 0", s.name)));
        }
    }
    Ok(())
}

fn run_sample(
    cfg: &PipelineConfig,
    index: usize,
    base_seed: u64,
    plot_it: bool,
    out: &Path,
    state: &mut SampleState,
) -> Result<SummaryRow> {
    let sample = &cfg.samples[index];
    let dir = out.join(&sample.name);
    let channel = ChannelConfig { seed: base_seed.wrapping_add(index as u64), ..cfg.channel };
    let m = measure(&sample.model, &cfg.excitation, &channel, cfg.periods, cfg.snr_db)?;
    let csv = spectrum_to_csv(&m.spectrum);
    write_atomic(&dir.join(SPECTRUM_FILE), csv.as_bytes())?;
    state.simulate = StageState::Done;

    let (result, peaks) = analyze(&m.spectrum, &cfg.drt)?;
    let file = write_result(&dir, &sample.name, &result, &peaks, sha256_hex(csv.as_bytes()), &cfg.drt, plot_it)?;
    state.drt = StageState::Done;

    let point = peak_point(&sample.name, &file.peaks, sample.kappa, cfg.tau_window, 0.0)?;
    state.peak = StageState::Done;
    Ok(SummaryRow { sample: sample.name.clone(), kappa_wtpct: sample.kappa, tau_us: point.tau * 1e6, tau_s: point.tau })
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("sample,kappa_wtpct,tau_us\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.sample, format_float(r.kappa_wtpct), format_float(r.tau_us));
    }
    out
}

/// Simulate, estimate, invert and calibrate every sample of `cfg`.
///
/// Samples run concurrently, each in its own subdirectory of `opts.out`.
/// The manifest is rewritten after every phase, so a failed run leaves a
/// record of which artifacts are complete.
pub fn cmd_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<PipelineOutput> {
    check_samples(cfg)?;
    check_window(cfg.tau_window)?;
    let out = &opts.out;
    let base_seed = opts.seed.unwrap_or(cfg.channel.seed);
    let mut manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        complete: false,
        samples: cfg
            .samples
            .iter()
            .map(|s| SampleState {
                sample: s.name.clone(),
                simulate: StageState::Pending,
                drt: StageState::Pending,
                peak: StageState::Pending,
                error: None,
            })
            .collect(),
        calibration: StageState::Pending,
        warnings: Vec::new(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;

    let outcomes: Vec<(SampleState, Result<SummaryRow>)> = (0..cfg.samples.len())
        .into_par_iter()
        .map(|i| {
            let mut state = manifest.samples[i].clone();
            let r = run_sample(cfg, i, base_seed, opts.plot, out, &mut state);
            (state, r)
        })
        .collect();

    let mut rows = Vec::new();
    let mut first_err = None;
    for (k, (mut state, r)) in outcomes.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                for s in [&mut state.simulate, &mut state.drt, &mut state.peak] {
                    if *s == StageState::Pending {
                        *s = StageState::Failed;
                        break;
                    }
                }
                state.error = Some(e.to_string());
                first_err.get_or_insert(e.context(format!("sample {}", cfg.samples[k].name)));
            }
        }
        manifest.samples[k] = state;
    }
    if let Some(e) = first_err {
        manifest.calibration = StageState::Skipped;
        write_json(&out.join(MANIFEST_FILE), &manifest)?;
        return Err(e);
    }
    write_atomic(&out.join(SUMMARY_FILE), summary_csv(&rows).as_bytes())?;

    let calibration = if rows.len() < 2 {
        let w = format!("calibration skipped: need at least 2 samples, got {}", rows.len());
        eprintln!("warning: {w}");
        manifest.warnings.push(w);
        manifest.calibration = StageState::Skipped;
        None
    } else {
        let points: Vec<CalibrationPoint> = rows
            .iter()
            .map(|r| CalibrationPoint::new(r.tau_s, r.kappa_wtpct, r.sample.clone()))
            .collect::<eisdrt::Result<_>>()?;
        match calibrate_points(&points, out, opts.plot) {
            Ok(f) => {
                manifest.calibration = StageState::Done;
                Some(f)
            }
            Err(e) => {
                manifest.calibration = StageState::Failed;
                manifest.warnings.push(e.to_string());
                write_json(&out.join(MANIFEST_FILE), &manifest)?;
                return Err(e.context("calibration"));
            }
        }
    };
    manifest.complete = true;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(PipelineOutput { summary: rows, calibration, manifest })
}
