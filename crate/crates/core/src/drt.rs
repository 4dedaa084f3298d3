//! Distribution of relaxation times.
//!
//! The spectrum is modelled as
//!
//! ```text
//! Z(jω) = R_∞ + ∫ γ(ln τ) / (1 + jωτ) d(ln τ)  [ + 1/(jωC) ]
//! ```
//!
//! discretized by the trapezoidal rule on a log-uniform τ grid. Real and
//! imaginary parts are stacked into one real least-squares problem with a
//! Tikhonov penalty `λ²‖Lγ‖²`, solved either unconstrained or with every
//! coefficient held non-negative.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_10, PI};

use crate::circuit::{angular, debye, ImpedanceSpectrum};
use crate::error::{Error, Result};
use crate::nnls;

pub const DEFAULT_POINTS_PER_DECADE: usize = 10;
pub const DEFAULT_PAD_DECADES: f64 = 1.0;
pub const DEFAULT_LAMBDA_REL: f64 = 1e-3;

/// Log-uniform grid of time constants (s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    taus: Vec<f64>,
    points_per_decade: usize,
}

impl TauGrid {
    /// `n` points starting at `tau_min`, spaced `1/points_per_decade` decades.
    pub fn log_uniform(tau_min: f64, n: usize, points_per_decade: usize) -> Result<Self> {
        if !(tau_min.is_finite() && tau_min > 0.0) || n < 2 || points_per_decade == 0 {
            return Err(Error::Domain(format!(
                "grid needs tau_min > 0, >= 2 points, ppd >= 1 (got {tau_min}, {n}, {points_per_decade})"
            )));
        }
        let step = LN_10 / points_per_decade as f64;
        let l0 = tau_min.ln();
        let taus = (0..n).map(|i| (l0 + step * i as f64).exp()).collect();
        Ok(TauGrid { taus, points_per_decade })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn points_per_decade(&self) -> usize {
        self.points_per_decade
    }

    /// Spacing in `ln τ`.
    pub fn step(&self) -> f64 {
        LN_10 / self.points_per_decade as f64
    }

    /// Trapezoidal weights in `ln τ`: the full step inside, half at the ends.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        let n = self.taus.len();
        (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h }).collect()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.taus[0], self.taus[self.taus.len() - 1])
    }
}

/// Grid from `10^-pad / (2π f_max)` up to at least `10^pad / (2π f_min)`.
pub fn build_tau_grid(f_min: f64, f_max: f64, points_per_decade: usize, pad_decades: f64) -> Result<TauGrid> {
    if !(f_min.is_finite() && f_max.is_finite() && f_min > 0.0 && f_min < f_max) {
        return Err(Error::Domain(format!("degenerate frequency range [{f_min}, {f_max}]")));
    }
    if points_per_decade == 0 || !(pad_decades.is_finite() && pad_decades >= 0.0) {
        return Err(Error::Domain("points_per_decade must be >= 1 and pad_decades >= 0".into()));
    }
    let lo = 10f64.powf(-pad_decades) / (2.0 * PI * f_max);
    let hi = 10f64.powf(pad_decades) / (2.0 * PI * f_min);
    let cells = (hi / lo).log10() * points_per_decade as f64;
    let n = (cells - 1e-9).ceil() as usize + 1;
    TauGrid::log_uniform(lo, n.max(2), points_per_decade)
}

/// Which columns follow the γ block in the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelLayout {
    pub n_tau: usize,
    pub series_capacitance: bool,
}

impl KernelLayout {
    pub fn r_inf_col(&self) -> usize {
        self.n_tau
    }

    pub fn capacitance_col(&self) -> Option<usize> {
        self.series_capacitance.then_some(self.n_tau + 1)
    }

    pub fn ncols(&self) -> usize {
        self.n_tau + 1 + usize::from(self.series_capacitance)
    }
}

/// Real design matrix with rows `[Re; Im]` over the frequencies.
///
/// Columns are the trapezoid-weighted Debye kernels `w_i / (1 + jωτ_i)`, a
/// unit real column for `R_∞`, and optionally the imaginary column `-1/ω`
/// whose coefficient is the inverse series capacitance.
pub fn build_kernel(freqs: &[f64], grid: &TauGrid, include_series_capacitance: bool) -> DMatrix<f64> {
    let n = freqs.len();
    let layout = KernelLayout { n_tau: grid.len(), series_capacitance: include_series_capacitance };
    let weights = grid.weights();
    let mut k = DMatrix::zeros(2 * n, layout.ncols());
    for (row, &f) in freqs.iter().enumerate() {
        let w = angular(f);
        for (col, (&tau, &wt)) in grid.taus().iter().zip(&weights).enumerate() {
            let d = debye(wt, w * tau);
            k[(row, col)] = d.re;
            k[(n + row, col)] = d.im;
        }
        k[(row, layout.r_inf_col())] = 1.0;
        if let Some(c) = layout.capacitance_col() {
            k[(n + row, c)] = -1.0 / w;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Identity,
    SecondDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrtOptions {
    pub nonneg: bool,
    pub include_series_capacitance: bool,
    pub regularizer: Regularizer,
}

impl Default for DrtOptions {
    fn default() -> Self {
        DrtOptions { nonneg: true, include_series_capacitance: false, regularizer: Regularizer::SecondDifference }
    }
}

fn regularizer_rows(reg: Regularizer, n_tau: usize, ncols: usize) -> DMatrix<f64> {
    match reg {
        Regularizer::Identity => {
            let mut l = DMatrix::zeros(n_tau, ncols);
            for i in 0..n_tau {
                l[(i, i)] = 1.0;
            }
            l
        }
        Regularizer::SecondDifference => {
            let rows = n_tau.saturating_sub(2);
            let mut l = DMatrix::zeros(rows, ncols);
            for i in 0..rows {
                l[(i, i)] = 1.0;
                l[(i, i + 1)] = -2.0;
                l[(i, i + 2)] = 1.0;
            }
            l
        }
    }
}

/// `lambda_rel` times the largest singular value of the γ block of the kernel.
pub fn relative_lambda(freqs: &[f64], grid: &TauGrid, lambda_rel: f64) -> f64 {
    let k = build_kernel(freqs, grid, false);
    let gamma_block = k.columns(0, grid.len()).into_owned();
    lambda_rel * gamma_block.singular_values().max()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrtResult {
    pub grid: TauGrid,
    /// Samples of γ(ln τ) (Ω), one per grid point.
    pub gamma: Vec<f64>,
    pub r_inf: f64,
    pub c_series: Option<f64>,
    pub lambda: f64,
    /// `sqrt(mean |Z_fit - Z|²)` over the input frequencies (Ω).
    pub residual_rms: f64,
}

/// Fits γ, `R_∞` and optionally a series capacitance to `spectrum`.
pub fn fit_drt(spectrum: &ImpedanceSpectrum, grid: &TauGrid, lambda: f64, options: &DrtOptions) -> Result<DrtResult> {
    if spectrum.len() < 4 {
        return Err(Error::Domain(format!("need at least 4 spectrum points, got {}", spectrum.len())));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let z = spectrum.values();
    if z.iter().all(|v| v.norm() == 0.0) {
        return Err(Error::Domain("all-zero spectrum".into()));
    }
    let freqs = spectrum.freqs();
    let n = freqs.len();
    let layout = KernelLayout { n_tau: grid.len(), series_capacitance: options.include_series_capacitance };
    let kernel = build_kernel(&freqs, grid, options.include_series_capacitance);
    let reg = regularizer_rows(options.regularizer, layout.n_tau, layout.ncols());

    let rows = 2 * n + reg.nrows();
    let mut a = DMatrix::zeros(rows, layout.ncols());
    a.rows_mut(0, 2 * n).copy_from(&kernel);
    a.rows_mut(2 * n, reg.nrows()).copy_from(&(reg * lambda));
    let mut b = DVector::zeros(rows);
    for (i, v) in z.iter().enumerate() {
        b[i] = v.re;
        b[n + i] = v.im;
    }

    let x = if options.nonneg { nnls::nnls(&a, &b)?.x } else { nnls::lstsq(&a, &b)? };

    let gamma: Vec<f64> = x.rows(0, layout.n_tau).iter().copied().collect();
    let inv_c = layout.capacitance_col().map(|c| x[c]);
    let mut result = DrtResult {
        grid: grid.clone(),
        gamma,
        r_inf: x[layout.r_inf_col()],
        c_series: inv_c.and_then(|v| (v > 0.0).then(|| 1.0 / v)),
        lambda,
        residual_rms: 0.0,
    };
    let fit = reconstruct(&result, &freqs)?;
    result.residual_rms = rms_difference(&fit.values(), &z);
    Ok(result)
}

/// [`fit_drt`] with `λ = lambda_rel · σ_max(kernel)`.
pub fn fit_drt_relative(
    spectrum: &ImpedanceSpectrum,
    grid: &TauGrid,
    lambda_rel: f64,
    options: &DrtOptions,
) -> Result<DrtResult> {
    let lambda = relative_lambda(&spectrum.freqs(), grid, lambda_rel);
    fit_drt(spectrum, grid, lambda, options)
}

pub fn rms_difference(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    (ss / a.len() as f64).sqrt()
}

/// Evaluates the discretized model of `result` at `freqs`.
pub fn reconstruct(result: &DrtResult, freqs: &[f64]) -> Result<ImpedanceSpectrum> {
    let weights = result.grid.weights();
    let mut z = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let w = angular(f);
        let mut v = Complex64::new(result.r_inf, 0.0);
        for ((&tau, &wt), &g) in result.grid.taus().iter().zip(&weights).zip(&result.gamma) {
            v += debye(wt * g, w * tau);
        }
        if let Some(c) = result.c_series {
            v += Complex64::new(0.0, -1.0 / (w * c));
        }
        z.push(v);
    }
    ImpedanceSpectrum::from_parts(freqs, &z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Interpolated location (s).
    pub tau: f64,
    /// γ at the sampled maximum (Ω).
    pub height: f64,
    /// `∫ γ d(ln τ)` between the enclosing minima (Ω).
    pub area: f64,
    pub prominence: f64,
    /// Grid index of the sampled maximum.
    pub index: usize,
}

/// Interior local maxima of γ with prominence at least `min_prominence`,
/// ascending in τ.
pub fn find_peaks(result: &DrtResult, min_prominence: f64) -> Vec<Peak> {
    let g = &result.gamma;
    let n = g.len();
    let h = result.grid.step();
    let ln_taus: Vec<f64> = result.grid.taus().iter().map(|t| t.ln()).collect();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if g[i] <= g[i - 1] {
            i += 1;
            continue;
        }
        // plateau [i, k]
        let mut k = i;
        while k + 1 < n && g[k + 1] == g[i] {
            k += 1;
        }
        if k + 1 >= n || g[k + 1] > g[i] {
            i = k + 1;
            continue;
        }
        let top = (i + k) / 2;
        let height = g[top];

        // prominence bases: lowest point before reaching higher ground
        let mut left_min = height;
        for j in (0..i).rev() {
            if g[j] > height {
                break;
            }
            left_min = left_min.min(g[j]);
        }
        let mut right_min = height;
        for &v in &g[k + 1..] {
            if v > height {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = height - left_min.max(right_min);

        // support between the nearest enclosing minima
        let mut lo = i;
        while lo > 0 && g[lo - 1] <= g[lo] {
            lo -= 1;
        }
        let mut hi = k;
        while hi + 1 < n && g[hi + 1] <= g[hi] {
            hi += 1;
        }
        let area = h * (g[lo..=hi].iter().sum::<f64>() - 0.5 * (g[lo] + g[hi]));

        let offset = if i == k {
            let denom = g[top - 1] - 2.0 * g[top] + g[top + 1];
            if denom < 0.0 {
                (0.5 * (g[top - 1] - g[top + 1]) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        } else if (k - i) % 2 == 1 {
            0.5
        } else {
            0.0
        };
        let tau = (ln_taus[top] + offset * h).exp();

        if prominence >= min_prominence && height > 0.0 && area > 0.0 {
            peaks.push(Peak { tau, height, area, prominence, index: top });
        }
        i = k + 1;
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{log_frequencies, synthesize_spectrum, RcLadder, RcStage};

    fn grid20() -> TauGrid {
        build_tau_grid(1e3, 1e6, 20, 1.0).unwrap()
    }

    #[test]
    fn grid_lower_bound_is_band_edge() {
        let g = build_tau_grid(1e3, 1e6, 10, 0.0).unwrap();
        assert!((g.bounds().0 - 1.0 / (2.0 * PI * 1e6)).abs() < 1e-20);
        assert!((g.bounds().0 - 1.59e-7).abs() / 1.59e-7 < 5e-3);
    }

    #[test]
    fn grid_count_and_spacing() {
        let g = build_tau_grid(1e3, 1e6, 10, 1.0).unwrap();
        // enumerate decade points independently
        let mut count = 0;
        let mut t = 1.0 / (2.0 * PI * 1e6) / 10.0;
        while t <= 10.0 / (2.0 * PI * 1e3) * (1.0 + 1e-9) {
            count += 1;
            t *= 10f64.powf(0.1);
        }
        assert_eq!(g.len(), count);
        assert_eq!(g.len(), 51);
        assert!((g.bounds().0 - 1.5915494309189535e-8).abs() < 1e-20);
        assert!((g.bounds().1 - 1.5915494309189535e-3).abs() / 1.59e-3 < 1e-12);
        let l: Vec<f64> = g.taus().iter().map(|t| t.ln()).collect();
        let d0 = l[1] - l[0];
        assert!(l.windows(2).all(|w| ((w[1] - w[0]) - d0).abs() < 1e-12));
    }

    #[test]
    fn grid_rejects_degenerate_range() {
        assert!(build_tau_grid(1e3, 1e3, 10, 1.0).is_err());
        assert!(build_tau_grid(0.0, 1e3, 10, 1.0).is_err());
        assert!(build_tau_grid(1e3, 1e6, 0, 1.0).is_err());
    }

    #[test]
    fn kernel_apex_and_r_inf_column() {
        let g = grid20();
        let i = 30;
        let f = 1.0 / (2.0 * PI * g.taus()[i]);
        let k = build_kernel(&[f, 2.0 * f], &g, true);
        assert_eq!(k.nrows(), 4);
        assert_eq!(k.ncols(), g.len() + 2);
        let h = g.step();
        assert!((k[(0, i)] - 0.5 * h).abs() < 1e-14);
        assert!((k[(2, i)] + 0.5 * h).abs() < 1e-14);
        let r = g.len();
        assert_eq!((k[(0, r)], k[(1, r)], k[(2, r)], k[(3, r)]), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(k[(0, r + 1)], 0.0);
        assert!((k[(2, r + 1)] + 1.0 / (2.0 * PI * f)).abs() < 1e-18);
        // trapezoid end weights
        let fe = 1.0 / (2.0 * PI * g.taus()[0]);
        let k = build_kernel(&[fe], &g, false);
        assert!((k[(0, 0)] - 0.25 * h).abs() < 1e-14);
    }

    #[test]
    fn kernel_product_matches_direct_quadrature() {
        let g = grid20();
        let freqs = log_frequencies(1e3, 1e6, 17);
        let k = build_kernel(&freqs, &g, false);
        let gamma: Vec<f64> = (0..g.len()).map(|i| (-((i as f64 - 40.0) / 6.0).powi(2)).exp()).collect();
        let mut x = DVector::zeros(g.len() + 1);
        for (i, v) in gamma.iter().enumerate() {
            x[i] = *v;
        }
        x[g.len()] = 7.0;
        let kx = &k * &x;
        let h = g.step();
        let jw = |f: f64| Complex64::new(0.0, 2.0 * PI * f);
        for (r, &f) in freqs.iter().enumerate() {
            let mut z = Complex64::new(7.0, 0.0);
            for (i, &t) in g.taus().iter().enumerate() {
                let w = if i == 0 || i + 1 == g.len() { h / 2.0 } else { h };
                z += w * gamma[i] / (1.0 + jw(f) * t);
            }
            assert!((kx[r] - z.re).abs() < 1e-12 * z.norm());
            assert!((kx[freqs.len() + r] - z.im).abs() < 1e-12 * z.norm());
        }
    }

    #[test]
    fn resistor_has_no_relaxation() {
        let freqs = log_frequencies(1e3, 1e6, 52);
        let s = synthesize_spectrum(&RcLadder::resistor(100.0).unwrap().into(), &freqs).unwrap();
        let r = fit_drt_relative(&s, &grid20(), DEFAULT_LAMBDA_REL, &DrtOptions::default()).unwrap();
        assert!((r.r_inf - 100.0).abs() < 0.1);
        assert!(r.gamma.iter().all(|&g| g < 0.1));
        assert!(find_peaks(&r, 5.0).is_empty());
    }

    #[test]
    fn fit_rejects_bad_input() {
        let freqs = log_frequencies(1e3, 1e6, 3);
        let s = synthesize_spectrum(&RcLadder::resistor(100.0).unwrap().into(), &freqs).unwrap();
        assert!(fit_drt(&s, &grid20(), 1.0, &DrtOptions::default()).is_err());
        let freqs = log_frequencies(1e3, 1e6, 8);
        let zero = ImpedanceSpectrum::from_parts(&freqs, &[Complex64::new(0.0, 0.0); 8]).unwrap();
        assert!(matches!(fit_drt(&zero, &grid20(), 1.0, &DrtOptions::default()), Err(Error::Domain(_))));
        let s = synthesize_spectrum(&RcLadder::resistor(1.0).unwrap().into(), &freqs).unwrap();
        assert!(fit_drt(&s, &grid20(), -1.0, &DrtOptions::default()).is_err());
    }

    #[test]
    fn reconstruct_flat() {
        let g = grid20();
        let r = DrtResult {
            gamma: vec![0.0; g.len()],
            grid: g,
            r_inf: 100.0,
            c_series: None,
            lambda: 0.0,
            residual_rms: 0.0,
        };
        let s = reconstruct(&r, &[1e3, 1e4, 1e5]).unwrap();
        assert!(s.values().iter().all(|z| *z == Complex64::new(100.0, 0.0)));
    }

    #[test]
    fn reconstruct_reproduces_residual() {
        let freqs = log_frequencies(1e3, 1e6, 52);
        let l = RcLadder::new(50.0, vec![RcStage::from_tau(100.0, 2e-6)]).unwrap();
        let s = synthesize_spectrum(&l.into(), &freqs).unwrap();
        let r = fit_drt_relative(&s, &grid20(), DEFAULT_LAMBDA_REL, &DrtOptions::default()).unwrap();
        let back = reconstruct(&r, &freqs).unwrap();
        let rms = rms_difference(&back.values(), &s.values());
        assert!((rms - r.residual_rms).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_and_identity_options_run() {
        let freqs = log_frequencies(1e3, 1e6, 52);
        let l = RcLadder::new(50.0, vec![RcStage::from_tau(100.0, 2e-6)]).unwrap();
        let s = synthesize_spectrum(&l.into(), &freqs).unwrap();
        let opts = DrtOptions { nonneg: false, regularizer: Regularizer::Identity, ..Default::default() };
        let r = fit_drt_relative(&s, &grid20(), DEFAULT_LAMBDA_REL, &opts).unwrap();
        assert!(r.residual_rms < 1.0);
    }

    fn result_from(gamma: Vec<f64>) -> DrtResult {
        let grid = TauGrid::log_uniform(1e-8, gamma.len(), 10).unwrap();
        DrtResult { grid, gamma, r_inf: 0.0, c_series: None, lambda: 0.0, residual_rms: 0.0 }
    }

    #[test]
    fn monotone_gamma_has_no_peaks() {
        assert!(find_peaks(&result_from((0..20).map(|i| i as f64).collect()), 0.0).is_empty());
        assert!(find_peaks(&result_from((0..20).map(|i| 20.0 - i as f64).collect()), 0.0).is_empty());
        assert!(find_peaks(&result_from(vec![0.0; 10]), 0.0).is_empty());
    }

    #[test]
    fn peak_interpolation_and_area() {
        // samples of a parabola-ish bump with a known vertex between two grid points
        let c = 10.3;
        let gamma: Vec<f64> = (0..21).map(|i| (9.0 - (i as f64 - c).powi(2)).max(0.0)).collect();
        let r = result_from(gamma.clone());
        let p = find_peaks(&r, 1.0);
        assert_eq!(p.len(), 1);
        let expect = (r.grid.taus()[0].ln() + c * r.grid.step()).exp();
        assert!((p[0].tau.ln() - expect.ln()).abs() < 1e-12);
        assert_eq!(p[0].index, 10);
        let h = r.grid.step();
        let area: f64 = gamma.iter().sum::<f64>() * h;
        assert!((p[0].area - area).abs() < 1e-12);
        assert_eq!(p[0].prominence, p[0].height);
    }

    #[test]
    fn prominence_filters_small_bumps() {
        let mut g = vec![0.0; 30];
        g[8] = 10.0;
        g[7] = 5.0;
        g[9] = 5.0;
        g[20] = 1.0;
        let r = result_from(g);
        assert_eq!(find_peaks(&r, 0.5).len(), 2);
        let p = find_peaks(&r, 2.0);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].index, 8);
    }

    #[test]
    fn prominence_sees_through_higher_neighbour() {
        // small bump on the flank of a larger one
        let g = vec![0.0, 1.0, 3.0, 2.5, 6.0, 10.0, 4.0, 0.0];
        let p = find_peaks(&result_from(g), 0.0);
        assert_eq!(p.len(), 2);
        assert!((p[0].prominence - 0.5).abs() < 1e-12);
        assert!((p[1].prominence - 10.0).abs() < 1e-12);
    }
}
