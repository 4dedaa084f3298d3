//! On-disk formats: spectrum CSV, DRT result JSON, calibration JSON.
//!
//! Floats in CSV are written with 17 significant digits; JSON uses the
//! shortest representation that round-trips. Either way a write-then-read
//! cycle reproduces the in-memory values bit for bit.

use std::io::Write;
use std::path::Path;

use eisdrt::{CalibrationModel, CalibrationPoint, Complex64, DrtResult, ImpedanceSpectrum, Peak, SpectrumPoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{data_error, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const SPECTRUM_HEADER: [&str; 3] = ["freq_hz", "z_re_ohm", "z_im_ohm"];
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Writes via a temporary file in the target directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn spectrum_to_csv(spectrum: &ImpedanceSpectrum) -> String {
    let mut out = SPECTRUM_HEADER.join(",");
    out.push('\n');
    for p in spectrum.points() {
        out.push_str(&format!("{},{},{}\n", format_float(p.freq), format_float(p.z.re), format_float(p.z.im)));
    }
    out
}

fn parse_finite(token: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| CliError::Data(format!("line {line}: {column} is not a number: {token:?}")))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("line {line}: {column} must be finite, got {token:?}")));
    }
    Ok(v)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn parse_spectrum_csv(text: &str) -> Result<ImpedanceSpectrum> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::Data(format!("spectrum header: {e}")))?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != SPECTRUM_HEADER {
        return Err(CliError::Data(format!(
            "line 1: expected header {}, got {}",
            SPECTRUM_HEADER.join(","),
            names.join(",")
        )));
    }
    let mut points: Vec<SpectrumPoint> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("line {line}: {e}"))
        })?;
        let line = record_line(&rec);
        let freq = parse_finite(&rec[0], line, SPECTRUM_HEADER[0])?;
        let re = parse_finite(&rec[1], line, SPECTRUM_HEADER[1])?;
        let im = parse_finite(&rec[2], line, SPECTRUM_HEADER[2])?;
        if freq <= 0.0 {
            return Err(CliError::Data(format!("line {line}: frequency must be positive, got {freq}")));
        }
        if let Some(prev) = points.last() {
            if freq <= prev.freq {
                return Err(CliError::Data(format!("line {line}: frequencies must be strictly ascending")));
            }
        }
        points.push(SpectrumPoint { freq, z: Complex64::new(re, im) });
    }
    if points.is_empty() {
        return Err(CliError::Data("spectrum file has no rows".into()));
    }
    ImpedanceSpectrum::new(points).map_err(data_error)
}

pub fn read_spectrum(path: &Path) -> Result<(ImpedanceSpectrum, String)> {
    let bytes = read_bytes(path)?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))?;
    let spectrum = parse_spectrum_csv(&text).map_err(|e| e.context(path.display()))?;
    Ok((spectrum, hash))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub tau_s: f64,
    pub height_ohm: f64,
    pub area_ohm: f64,
    pub prominence_ohm: f64,
}

impl From<&Peak> for PeakRecord {
    fn from(p: &Peak) -> Self {
        PeakRecord { tau_s: p.tau, height_ohm: p.height, area_ohm: p.area, prominence_ohm: p.prominence }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the input spectrum file, or of the in-memory CSV when the
    /// spectrum never touched the disk.
    pub input_sha256: String,
    pub config: serde_json::Value,
    pub tool_version: String,
    /// Creation time; the only field allowed to differ between reruns.
    pub created_unix_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema_version: u32,
    pub tau_grid: Vec<f64>,
    pub points_per_decade: usize,
    pub gamma: Vec<f64>,
    pub r_inf: f64,
    pub c_series: Option<f64>,
    pub lambda: f64,
    pub residual_rms: f64,
    pub peaks: Vec<PeakRecord>,
    /// SHA-256 of this document with `created_unix_s` and this field blanked.
    pub content_sha256: String,
    pub provenance: Provenance,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl ResultFile {
    pub fn new(result: &DrtResult, peaks: &[Peak], input_sha256: String, config: serde_json::Value) -> Self {
        let mut file = ResultFile {
            schema_version: SCHEMA_VERSION,
            tau_grid: result.grid.taus().to_vec(),
            points_per_decade: result.grid.points_per_decade(),
            gamma: result.gamma.clone(),
            r_inf: result.r_inf,
            c_series: result.c_series,
            lambda: result.lambda,
            residual_rms: result.residual_rms,
            peaks: peaks.iter().map(PeakRecord::from).collect(),
            content_sha256: String::new(),
            provenance: Provenance {
                input_sha256,
                config,
                tool_version: TOOL_VERSION.into(),
                created_unix_s: unix_now(),
            },
        };
        file.content_sha256 = file.content_hash();
        file
    }

    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.content_sha256.clear();
        copy.provenance.created_unix_s = 0;
        sha256_hex(serde_json::to_string(&copy).expect("serializable").as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.tau_grid.len() != self.gamma.len() {
            return Err(CliError::Data(format!(
                "tau_grid has {} entries but gamma has {}",
                self.tau_grid.len(),
                self.gamma.len()
            )));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let file: ResultFile =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        file.validate().map_err(|e| e.context(path.display()))?;
        Ok(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPointRecord {
    pub sample: String,
    pub tau_s: f64,
    pub tau_us: f64,
    pub kappa_wtpct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema_version: u32,
    /// Sorted by τ, then sample name.
    pub points: Vec<CalibrationPointRecord>,
    pub slope_wtpct_per_us: f64,
    pub intercept_wtpct: f64,
    pub r_squared: f64,
    pub tool_version: String,
}

impl CalibrationFile {
    pub fn new(points: &[CalibrationPoint], model: &CalibrationModel) -> Self {
        let mut recs: Vec<CalibrationPointRecord> = points
            .iter()
            .map(|p| CalibrationPointRecord {
                sample: p.label.clone(),
                tau_s: p.tau,
                tau_us: p.tau * 1e6,
                kappa_wtpct: p.kappa,
            })
            .collect();
        recs.sort_by(|a, b| a.tau_s.total_cmp(&b.tau_s).then_with(|| a.sample.cmp(&b.sample)));
        CalibrationFile {
            schema_version: SCHEMA_VERSION,
            points: recs,
            slope_wtpct_per_us: eisdrt::sensitivity(model),
            intercept_wtpct: model.intercept_b,
            r_squared: model.r_squared,
            tool_version: TOOL_VERSION.into(),
        }
    }
}

/// Reads `tau_s,kappa_wtpct[,sample]` rows (header required, any column
/// order). Rows without a sample column are named `row<N>`.
pub fn parse_calibration_csv(text: &str) -> Result<Vec<CalibrationPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::Data(format!("calibration header: {e}")))?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (Some(ti), Some(ki)) = (col("tau_s"), col("kappa_wtpct")) else {
        return Err(CliError::Data("line 1: calibration CSV needs tau_s and kappa_wtpct columns".into()));
    };
    let si = col("sample");
    let mut points = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("line {line}: {e}"))
        })?;
        let line = record_line(&rec);
        let tau = parse_finite(&rec[ti], line, "tau_s")?;
        let kappa = parse_finite(&rec[ki], line, "kappa_wtpct")?;
        let label = si.map_or_else(|| format!("row{}", n + 1), |i| rec[i].trim().to_string());
        points.push(CalibrationPoint::new(tau, kappa, label).map_err(|e| CliError::Data(format!("line {line}: {e}")))?);
    }
    Ok(points)
}
