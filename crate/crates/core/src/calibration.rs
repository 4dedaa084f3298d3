//! Linear concentration-versus-relaxation-time calibration.
//!
//! Concentration κ (wt.%) is regressed on τ (s) by ordinary least squares.
//! Everything is stored in SI seconds; [`sensitivity`] reports wt.%/µs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    /// Characteristic relaxation time (s).
    pub tau: f64,
    /// Known concentration (wt.%).
    pub kappa: f64,
    pub label: String,
}

impl CalibrationPoint {
    pub fn new(tau: f64, kappa: f64, label: impl Into<String>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) || !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::Domain(format!("need tau > 0 and kappa >= 0 (got {tau}, {kappa})")));
        }
        Ok(CalibrationPoint { tau, kappa, label: label.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// wt.% per second.
    pub slope_a: f64,
    /// wt.%
    pub intercept_b: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Ordinary least squares of κ on τ.
///
/// Sums are accumulated about the means in τ order, so the result does not
/// depend on the input order.
pub fn fit_linear(points: &[CalibrationPoint]) -> Result<CalibrationModel> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!("calibration needs at least 2 points, got {}", points.len())));
    }
    for p in points {
        if !(p.tau.is_finite() && p.tau > 0.0) || !(p.kappa.is_finite() && p.kappa >= 0.0) {
            return Err(Error::Domain(format!("invalid calibration point {p:?}")));
        }
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.tau, p.kappa)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mk = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, k) in &pts {
        let (dt, dk) = (t - mt, k - mk);
        sxx += dt * dt;
        sxy += dt * dk;
        syy += dk * dk;
    }
    if sxx <= (f64::EPSILON * mt).powi(2) * n {
        return Err(Error::SingularFit("all relaxation times are identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = mk - slope * mt;
    let r_squared = if syy == 0.0 {
        // constant κ is fitted exactly by a flat line
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(CalibrationModel { slope_a: slope, intercept_b: intercept, r_squared, n_points: pts.len() })
}

/// `∂κ/∂τ` in wt.% per microsecond.
pub fn sensitivity(model: &CalibrationModel) -> f64 {
    model.slope_a * 1e-6
}

/// Predicted concentration (wt.%) at `tau` seconds.
pub fn predict(model: &CalibrationModel, tau: f64) -> f64 {
    model.slope_a * tau + model.intercept_b
}

/// Concentration step resolvable from a τ step of `delta_tau` seconds.
pub fn resolution(model: &CalibrationModel, delta_tau: f64) -> Result<f64> {
    if !(delta_tau.is_finite() && delta_tau > 0.0) {
        return Err(Error::Domain(format!("delta_tau must be positive, got {delta_tau}")));
    }
    Ok(model.slope_a.abs() * delta_tau)
}

/// The four published (τ, κ) pairs: τ in seconds, κ in wt.%.
pub const REFERENCE_SAMPLES: [(&str, f64, f64); 4] =
    [("C1", 1.60e-6, 0.1), ("C2", 2.00e-6, 0.5), ("C3", 2.85e-6, 1.0), ("C4", 3.33e-6, 1.5)];

pub fn reference_points() -> Vec<CalibrationPoint> {
    REFERENCE_SAMPLES.iter().map(|&(label, tau, kappa)| CalibrationPoint { tau, kappa, label: label.into() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(tau_us: f64, kappa: f64) -> CalibrationPoint {
        CalibrationPoint::new(tau_us * 1e-6, kappa, "").unwrap()
    }

    #[test]
    fn reference_fit() {
        let m = fit_linear(&reference_points()).unwrap();
        // closed form on the four points: Sxy = 1.4255, Sxx = 1.8593, Syy = 1.1075 (µs, wt.%)
        let slope = 1.4255 / 1.8593;
        let r2 = 1.4255f64.powi(2) / (1.8593 * 1.1075);
        assert!((sensitivity(&m) - slope).abs() < 1e-12);
        assert!((m.r_squared - r2).abs() < 1e-12);
        assert!((m.r_squared - 0.9868).abs() < 5e-4);
        assert!((m.intercept_b - (0.775 - slope * 2.445)).abs() < 1e-12);
        assert_eq!(m.n_points, 4);
    }

    #[test]
    fn two_point_line() {
        let m = fit_linear(&[pt(1.0, 0.0), pt(2.0, 1.0)]).unwrap();
        assert!((sensitivity(&m) - 1.0).abs() < 1e-12);
        assert!((m.intercept_b + 1.0).abs() < 1e-12);
        assert!((m.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_linear(&[pt(1.0, 0.0)]), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_linear(&[pt(1.0, 0.0), pt(1.0, 2.0)]), Err(Error::SingularFit(_))));
        assert!(CalibrationPoint::new(0.0, 1.0, "x").is_err());
        assert!(CalibrationPoint::new(1.0, -1.0, "x").is_err());
    }

    #[test]
    fn predictions_and_resolution() {
        let m = fit_linear(&reference_points()).unwrap();
        assert!((predict(&m, 2.85e-6) - 1.0).abs() < 0.1);
        assert!((predict(&m, 2.445e-6) - 0.775).abs() < 1e-12);
        let unit = CalibrationModel { slope_a: 1e6, intercept_b: 0.0, r_squared: 1.0, n_points: 2 };
        assert!((predict(&unit, 2e-6) - 2.0).abs() < 1e-12);
        let r = resolution(&m, 1.59e-7).unwrap();
        assert!((r - 0.1219).abs() < 1e-3);
        assert!((resolution(&m, 3.18e-7).unwrap() - 2.0 * r).abs() < 1e-15);
        assert!(resolution(&m, 0.0).is_err());
    }

    #[test]
    fn scaling_kappa_scales_sensitivity() {
        let pts = reference_points();
        let doubled: Vec<_> = pts.iter().map(|p| CalibrationPoint { kappa: 2.0 * p.kappa, ..p.clone() }).collect();
        let a = fit_linear(&pts).unwrap();
        let b = fit_linear(&doubled).unwrap();
        assert!((sensitivity(&b) - 2.0 * sensitivity(&a)).abs() < 1e-12);
        assert_eq!(a.slope_a * 1e-6, sensitivity(&a));
    }
}
