//! Forward impedance models.
//!
//! Two models are provided: the lumped equivalent circuit of a particle
//! suspension (electrode capacitance in series with the medium resistance,
//! which is shunted by the particle R-C branch) and the series RC ladder that
//! is the discrete form of a distribution of relaxation times.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn angular(freq: f64) -> f64 {
    2.0 * PI * freq
}

fn check_freq(freq: f64) -> Result<()> {
    if freq.is_finite() && freq > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("frequency must be positive and finite, got {freq}")))
    }
}

/// `num / den` with both operands first scaled by the largest component of
/// `den`, so that neither `|den|²` nor the cross products overflow.
fn scaled_div(num: Complex64, den: Complex64) -> Complex64 {
    let s = den.re.abs().max(den.im.abs());
    if s == 0.0 || !s.is_finite() {
        return num / den;
    }
    (num / s) / (den / s)
}

/// `dr / (1 + j x)` evaluated without forming `x²` for large `x`.
#[inline]
pub(crate) fn debye(dr: f64, x: f64) -> Complex64 {
    if x.abs() <= 1.0 {
        let d = 1.0 + x * x;
        Complex64::new(dr / d, -dr * x / d)
    } else {
        let t = 1.0 / x;
        let d = 1.0 + t * t;
        Complex64::new(dr * t * t / d, -dr * t / d)
    }
}

/// Parameters `[C_e, R_m, R_p, C_p]` of the suspension equivalent circuit.
///
/// `c_p = 0` or `r_p = +inf` describe an open particle branch, in which case
/// the bulk term reduces to `r_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Electrode capacitance (F).
    pub c_e: f64,
    /// Medium resistance (Ω).
    pub r_m: f64,
    /// Particle resistance (Ω).
    pub r_p: f64,
    /// Particle capacitance (F).
    pub c_p: f64,
}

impl CircuitParams {
    pub fn new(c_e: f64, r_m: f64, r_p: f64, c_p: f64) -> Result<Self> {
        let p = CircuitParams { c_e, r_m, r_p, c_p };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c_e.is_finite()
            && self.c_e > 0.0
            && self.r_m.is_finite()
            && self.r_m > 0.0
            && !self.r_p.is_nan()
            && self.r_p >= 0.0
            && self.c_p.is_finite()
            && self.c_p >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid circuit parameters (need c_e > 0, r_m > 0, r_p >= 0, c_p >= 0): {self:?}"
            )))
        }
    }

    fn branch_open(&self) -> bool {
        self.c_p == 0.0 || self.r_p.is_infinite()
    }

    /// Relaxation time `C_p (R_m + R_p)` of the bulk term, if a relaxation exists.
    pub fn relaxation_time(&self) -> Option<f64> {
        if self.branch_open() {
            None
        } else {
            Some(self.c_p * (self.r_m + self.r_p))
        }
    }

    /// Bulk term only: `R_m ∥ (R_p + 1/(jωC_p))`.
    pub fn bulk_impedance(&self, freq: f64) -> Result<Complex64> {
        check_freq(freq)?;
        self.validate()?;
        Ok(self.bulk_unchecked(angular(freq)))
    }

    fn bulk_unchecked(&self, w: f64) -> Complex64 {
        if self.branch_open() {
            return Complex64::new(self.r_m, 0.0);
        }
        let branch = Complex64::new(self.r_p, -1.0 / (w * self.c_p));
        let rm = Complex64::new(self.r_m, 0.0);
        scaled_div(rm * branch, rm + branch)
    }
}

/// Impedance of the suspension circuit at `freq` (Hz).
pub fn eval_colloid_circuit(params: &CircuitParams, freq: f64) -> Result<Complex64> {
    check_freq(freq)?;
    params.validate()?;
    let w = angular(freq);
    let electrode = Complex64::new(0.0, -1.0 / (w * params.c_e));
    Ok(electrode + params.bulk_unchecked(w))
}

/// Single-Debye parameters of the bulk term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebyeForm {
    /// Low-frequency limit (Ω).
    pub z0: f64,
    /// High-frequency limit (Ω).
    pub z_inf: f64,
    /// Relaxation time (s).
    pub tau: f64,
}

impl DebyeForm {
    pub fn eval(&self, freq: f64) -> Complex64 {
        Complex64::new(self.z_inf, 0.0) + debye(self.z0 - self.z_inf, angular(freq) * self.tau)
    }
}

/// Rewrites the bulk term as `z_inf + (z0 - z_inf) / (1 + jωτ)`.
pub fn colloid_debye_form(params: &CircuitParams) -> Result<DebyeForm> {
    params.validate()?;
    if params.branch_open() {
        return Err(Error::Degenerate("open particle branch (c_p = 0 or r_p = inf) has no relaxation".into()));
    }
    let (rm, rp) = (params.r_m, params.r_p);
    Ok(DebyeForm { z0: rm, z_inf: rm * rp / (rm + rp), tau: params.c_p * (rm + rp) })
}

/// One parallel RC cell of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcStage {
    pub r: f64,
    pub c: f64,
}

impl RcStage {
    pub fn new(r: f64, c: f64) -> Self {
        RcStage { r, c }
    }

    /// Stage from its resistance and time constant.
    pub fn from_tau(r: f64, tau: f64) -> Self {
        RcStage { r, c: tau / r }
    }

    pub fn tau(&self) -> f64 {
        self.r * self.c
    }
}

#[derive(Deserialize)]
struct RawLadder {
    r_inf: f64,
    #[serde(default)]
    stages: Vec<RcStage>,
}

/// Series connection of `r_inf` and parallel RC stages, kept sorted by
/// ascending time constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLadder")]
pub struct RcLadder {
    r_inf: f64,
    stages: Vec<RcStage>,
}

impl TryFrom<RawLadder> for RcLadder {
    type Error = Error;

    fn try_from(raw: RawLadder) -> Result<Self> {
        RcLadder::new(raw.r_inf, raw.stages)
    }
}

impl RcLadder {
    pub fn new(r_inf: f64, mut stages: Vec<RcStage>) -> Result<Self> {
        if !(r_inf.is_finite() && r_inf >= 0.0) {
            return Err(Error::Domain(format!("r_inf must be finite and >= 0, got {r_inf}")));
        }
        for (i, s) in stages.iter().enumerate() {
            let tau = s.tau();
            if !(s.r.is_finite() && s.r > 0.0 && s.c.is_finite() && s.c > 0.0) || !(tau.is_finite() && tau > 0.0) {
                return Err(Error::Domain(format!("stage {i} needs r > 0, c > 0: {s:?}")));
            }
        }
        stages.sort_by(|a, b| a.tau().total_cmp(&b.tau()));
        Ok(RcLadder { r_inf, stages })
    }

    pub fn resistor(r: f64) -> Result<Self> {
        Self::new(r, Vec::new())
    }

    pub fn r_inf(&self) -> f64 {
        self.r_inf
    }

    pub fn stages(&self) -> &[RcStage] {
        &self.stages
    }
}

/// `r_inf + Σ r_i / (1 + jω r_i c_i)` at `freq` (Hz).
pub fn eval_rc_ladder(ladder: &RcLadder, freq: f64) -> Result<Complex64> {
    check_freq(freq)?;
    let w = angular(freq);
    Ok(ladder.stages.iter().fold(Complex64::new(ladder.r_inf, 0.0), |acc, s| acc + debye(s.r, w * s.tau())))
}

/// Any forward model that can generate a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImpedanceModel {
    Colloid(CircuitParams),
    Ladder(RcLadder),
}

impl ImpedanceModel {
    pub fn impedance(&self, freq: f64) -> Result<Complex64> {
        match self {
            ImpedanceModel::Colloid(p) => eval_colloid_circuit(p, freq),
            ImpedanceModel::Ladder(l) => eval_rc_ladder(l, freq),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ImpedanceModel::Colloid(p) => p.validate(),
            ImpedanceModel::Ladder(_) => Ok(()),
        }
    }

    /// Short human-readable description, stored in spectrum metadata.
    pub fn describe(&self) -> String {
        match self {
            ImpedanceModel::Colloid(p) => {
                format!("colloid(c_e={:e}, r_m={:e}, r_p={:e}, c_p={:e})", p.c_e, p.r_m, p.r_p, p.c_p)
            }
            ImpedanceModel::Ladder(l) => {
                let stages: Vec<String> = l.stages.iter().map(|s| format!("({:e}, {:e})", s.r, s.c)).collect();
                format!("ladder(r_inf={:e}, stages=[{}])", l.r_inf, stages.join(", "))
            }
        }
    }
}

impl From<CircuitParams> for ImpedanceModel {
    fn from(p: CircuitParams) -> Self {
        ImpedanceModel::Colloid(p)
    }
}

impl From<RcLadder> for ImpedanceModel {
    fn from(l: RcLadder) -> Self {
        ImpedanceModel::Ladder(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Frequency (Hz).
    pub freq: f64,
    /// Complex impedance (Ω).
    pub z: Complex64,
}

/// Impedance values at strictly increasing positive frequencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpedanceSpectrum {
    points: Vec<SpectrumPoint>,
    pub metadata: BTreeMap<String, String>,
}

impl ImpedanceSpectrum {
    pub fn new(points: Vec<SpectrumPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.freq.is_finite() && p.freq > 0.0) {
                return Err(Error::Domain(format!("point {i}: frequency {} is not positive", p.freq)));
            }
            if !(p.z.re.is_finite() && p.z.im.is_finite()) {
                return Err(Error::Domain(format!("point {i}: non-finite impedance {}", p.z)));
            }
            if i > 0 && p.freq <= points[i - 1].freq {
                return Err(Error::Domain(format!(
                    "frequencies must be strictly increasing (point {i}: {} after {})",
                    p.freq,
                    points[i - 1].freq
                )));
            }
        }
        Ok(ImpedanceSpectrum { points, metadata: BTreeMap::new() })
    }

    pub fn from_parts(freqs: &[f64], z: &[Complex64]) -> Result<Self> {
        if freqs.len() != z.len() {
            return Err(Error::Domain(format!("{} frequencies but {} impedance values", freqs.len(), z.len())));
        }
        Self::new(freqs.iter().zip(z).map(|(&freq, &z)| SpectrumPoint { freq, z }).collect())
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.freq).collect()
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| p.z).collect()
    }

    /// Multiplies every impedance value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        ImpedanceSpectrum {
            points: self.points.iter().map(|p| SpectrumPoint { freq: p.freq, z: p.z * c }).collect(),
            metadata: self.metadata.clone(),
        }
    }
}

/// Evaluates `model` at every frequency.
pub fn synthesize_spectrum(model: &ImpedanceModel, freqs: &[f64]) -> Result<ImpedanceSpectrum> {
    if freqs.is_empty() {
        return Err(Error::Domain("empty frequency list".into()));
    }
    model.validate()?;
    let z = freqs.iter().map(|&f| model.impedance(f)).collect::<Result<Vec<_>>>()?;
    Ok(ImpedanceSpectrum::from_parts(freqs, &z)?.with_meta("model", model.describe()))
}

/// `n` log-spaced frequencies from `f_min` to `f_max` inclusive.
pub fn log_frequencies(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => {
            let (a, b) = (f_min.ln(), f_max.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    /// Term-by-term evaluation of the textbook expression.
    fn colloid_oracle(c_e: f64, r_m: f64, r_p: f64, c_p: f64, f: f64) -> Complex64 {
        let jw = Complex64::new(0.0, 2.0 * PI * f);
        let one = Complex64::new(1.0, 0.0);
        one / (jw * c_e) + r_m * (one + jw * r_p * c_p) / (jw * r_m * c_p + (one + jw * r_p * c_p))
    }

    #[test]
    fn open_branch_is_rm_plus_electrode() {
        let p = CircuitParams::new(1e-6, 100.0, 1234.0, 0.0).unwrap();
        let z = eval_colloid_circuit(&p, 10e3).unwrap();
        assert!((z.re - 100.0).abs() < 1e-12);
        assert!((z.im + 15.915494309189533).abs() < 1e-9);

        let p = CircuitParams { r_p: f64::INFINITY, c_p: 1e-9, ..p };
        let z = eval_colloid_circuit(&p, 10e3).unwrap();
        assert!((z.re - 100.0).abs() < 1e-12);
    }

    #[test]
    fn bulk_high_frequency_is_parallel_resistance() {
        let p = CircuitParams::new(1e-6, 100.0, 100.0, 1e-9).unwrap();
        let z = p.bulk_impedance(1e12).unwrap();
        assert!((z.re - 50.0).abs() < 1e-6, "{z}");
    }

    #[test]
    fn colloid_matches_oracle() {
        let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
        let z = eval_colloid_circuit(&p, 100e3).unwrap();
        let o = colloid_oracle(1e-6, 100.0, 900.0, 2e-9, 100e3);
        assert!(rel(z, o) < 1e-12, "{z} vs {o}");
    }

    #[test]
    fn colloid_limits() {
        let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
        let lo = p.bulk_impedance(1e-3).unwrap();
        let hi = p.bulk_impedance(1e9).unwrap();
        assert!((lo.re - 100.0).abs() / 100.0 < 1e-3);
        assert!((hi.re - 90.0).abs() / 90.0 < 1e-3);
    }

    #[test]
    fn colloid_rejects_bad_input() {
        let p = CircuitParams { c_e: 1e-6, r_m: 100.0, r_p: 1.0, c_p: 1e-9 };
        assert!(matches!(eval_colloid_circuit(&p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(eval_colloid_circuit(&p, -5.0), Err(Error::Domain(_))));
        let bad = CircuitParams { r_m: 0.0, ..p };
        assert!(matches!(eval_colloid_circuit(&bad, 1e3), Err(Error::Domain(_))));
        let bad = CircuitParams { c_e: 0.0, ..p };
        assert!(CircuitParams::new(bad.c_e, bad.r_m, bad.r_p, bad.c_p).is_err());
        let bad = CircuitParams { r_p: -1.0, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn debye_form_examples() {
        let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
        let d = colloid_debye_form(&p).unwrap();
        assert!((d.tau - 2e-6).abs() < 1e-18);
        assert_eq!(d.z0, 100.0);
        assert!((d.z_inf - 90.0).abs() < 1e-12);

        let d = colloid_debye_form(&CircuitParams::new(1e-6, 100.0, 0.0, 3e-9).unwrap()).unwrap();
        assert_eq!(d.z_inf, 0.0);
        assert!((d.tau - 3e-7).abs() < 1e-20);

        let d = colloid_debye_form(&CircuitParams::new(1e-6, 100.0, 100.0, 10e-9).unwrap()).unwrap();
        assert!((d.tau - 2e-6).abs() < 1e-18);
        assert_eq!(d.z_inf, 50.0);

        let open = CircuitParams::new(1e-6, 100.0, 100.0, 0.0).unwrap();
        assert!(matches!(colloid_debye_form(&open), Err(Error::Degenerate(_))));
    }

    #[test]
    fn debye_form_agrees_with_bulk_at_random_frequencies() {
        use rand::{Rng, SeedableRng};
        let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
        let d = colloid_debye_form(&p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let f = 10f64.powf(rng.random_range(0.0..8.0));
            let o = colloid_oracle(1e-6, 100.0, 900.0, 2e-9, f) - Complex64::new(0.0, -1.0 / (2.0 * PI * f * 1e-6));
            assert!(rel(d.eval(f), o) < 1e-12);
        }
    }

    #[test]
    fn ladder_examples() {
        let l = RcLadder::resistor(100.0).unwrap();
        assert_eq!(eval_rc_ladder(&l, 123.0).unwrap(), Complex64::new(100.0, 0.0));

        let l = RcLadder::new(0.0, vec![RcStage::new(100.0, 20e-9)]).unwrap();
        let f = 1.0 / (2.0 * PI * 2e-6);
        let z = eval_rc_ladder(&l, f).unwrap();
        assert!((z - Complex64::new(50.0, -50.0)).norm() < 1e-10);

        let l = RcLadder::new(50.0, vec![RcStage::new(200.0, 5e-6), RcStage::new(100.0, 20e-9)]).unwrap();
        let jw = Complex64::new(0.0, 2.0 * PI * 1e3);
        let one = Complex64::new(1.0, 0.0);
        let o = 50.0 + 100.0 / (one + jw * 100.0 * 20e-9) + 200.0 / (one + jw * 200.0 * 5e-6);
        assert!(rel(eval_rc_ladder(&l, 1e3).unwrap(), o) < 1e-12);
        assert!(matches!(eval_rc_ladder(&l, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn ladder_is_canonically_sorted() {
        let l = RcLadder::new(1.0, vec![RcStage::new(1.0, 1.0), RcStage::new(1.0, 1e-3)]).unwrap();
        assert!(l.stages()[0].tau() < l.stages()[1].tau());
        assert!(RcLadder::new(1.0, vec![RcStage::new(0.0, 1.0)]).is_err());
        assert!(RcLadder::new(-1.0, vec![]).is_err());

        let json = r#"{"r_inf": 5.0, "stages": [{"r": 1.0, "c": 1.0}, {"r": 2.0, "c": 1e-6}]}"#;
        let l: RcLadder = serde_json::from_str(json).unwrap();
        assert_eq!(l.stages()[0].r, 2.0);
        let bad = r#"{"r_inf": 5.0, "stages": [{"r": -1.0, "c": 1.0}]}"#;
        assert!(serde_json::from_str::<RcLadder>(bad).is_err());
    }

    #[test]
    fn synthesize_shapes() {
        let freqs = log_frequencies(1e3, 1e6, 52);
        let s = synthesize_spectrum(&RcLadder::resistor(100.0).unwrap().into(), &freqs).unwrap();
        assert_eq!(s.len(), 52);
        assert!(s.points().iter().all(|p| p.z == Complex64::new(100.0, 0.0)));
        assert!(s.metadata["model"].starts_with("ladder"));

        let p = CircuitParams::new(1e-6, 100.0, 900.0, 2e-9).unwrap();
        let s = synthesize_spectrum(&p.into(), &freqs).unwrap();
        assert_eq!(s.len(), freqs.len());
        // the bulk term sits near the medium resistance at the low end
        assert!((s.points()[0].z.re - 100.0).abs() < 1.0);

        assert!(synthesize_spectrum(&p.into(), &[]).is_err());
        assert!(synthesize_spectrum(&p.into(), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn spectrum_rejects_non_finite() {
        let bad = ImpedanceSpectrum::from_parts(&[1.0], &[Complex64::new(f64::NAN, 0.0)]);
        assert!(bad.is_err());
        let bad = ImpedanceSpectrum::from_parts(&[0.0], &[Complex64::new(1.0, 0.0)]);
        assert!(bad.is_err());
    }
}
