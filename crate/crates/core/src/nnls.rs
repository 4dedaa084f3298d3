//! Non-negative least squares by the Lawson–Hanson active-set method.
//!
//! Columns are normalized to unit length before solving and the solution is
//! mapped back afterwards. The passive-set subproblems are solved with an
//! SVD so that near-collinear columns do not blow up the iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default KKT tolerance, relative to `‖a_j‖·‖b‖` per column.
pub const KKT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Scale-free KKT violation, see [`kkt_residual`].
    pub kkt_residual: f64,
    /// `‖A x - b‖₂`
    pub residual_norm: f64,
}

/// Largest scale-free KKT violation of `x` for `min ‖Ax - b‖, x ≥ 0`.
///
/// With `w = Aᵀ(b - Ax)`, a free coordinate (`x_j > 0`) contributes
/// `|w_j|` and a bound one contributes `max(w_j, 0)`; each is divided by
/// `‖a_j‖·‖b‖`. Negative entries of `x` count as infeasibility.
pub fn kkt_residual(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return x.iter().fold(0.0f64, |m, v| m.max(-v));
    }
    let w = a.tr_mul(&(b - a * x));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        let cn = a.column(j).norm();
        if cn == 0.0 {
            continue;
        }
        let v = if x[j] > 0.0 { w[j].abs() } else { w[j].max(0.0) };
        worst = worst.max(v / (cn * bn));
        if x[j] < 0.0 {
            worst = worst.max(-x[j] * cn / bn);
        }
    }
    worst
}

fn passive_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(passive);
    let svd = sub.svd(true, true);
    let eps = f64::EPSILON * (a.nrows().max(passive.len()) as f64) * svd.singular_values.max();
    svd.solve(b, eps).expect("u and v were computed")
}

/// Minimizes `‖A x - b‖₂` subject to `x ≥ 0`.
///
/// Returns [`Error::Convergence`] carrying the best iterate when the outer
/// loop exceeds `max_iter` or the final KKT residual exceeds `tol`.
pub fn nnls_with(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 || b.len() != m {
        return Err(Error::Domain(format!("nnls: bad shapes A {m}x{n}, b {}", b.len())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("nnls: non-finite input".into()));
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut scaled = a.clone();
    for (j, &c) in norms.iter().enumerate() {
        if c > 0.0 {
            scaled.column_mut(j).unscale_mut(c);
        }
    }
    let a = &scaled;
    let bn = b.norm();
    let gtol = tol * bn;

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut iterations = 0;

    // zero columns can never help; keep them at 0
    for j in 0..n {
        if norms[j] == 0.0 {
            blocked[j] = true;
        }
    }

    loop {
        if bn == 0.0 {
            break;
        }
        let w = a.tr_mul(&(b - a * &x));
        let cand = (0..n).filter(|&j| !passive[j] && !blocked[j] && w[j] > gtol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };

        iterations += 1;
        if iterations > max_iter {
            let best = unscale(&x, &norms);
            return Err(Error::Convergence {
                iterations: max_iter,
                kkt_residual: kkt_residual(&scaled, b, &x),
                best: best.iter().copied().collect(),
            });
        }

        passive[j] = true;
        let before = x.clone();
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            if idx.is_empty() {
                break;
            }
            let s = passive_lstsq(a, b, &idx);
            if s.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = s[k];
                }
                break;
            }
            // step toward s until the first passive coordinate hits zero
            let mut alpha = 1.0f64;
            for (k, &i) in idx.iter().enumerate() {
                if s[k] <= 0.0 {
                    let d = x[i] - s[k];
                    if d > 0.0 {
                        alpha = alpha.min(x[i] / d);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s[k] - x[i]);
            }
            let mut moved = false;
            for (k, &i) in idx.iter().enumerate() {
                if x[i] <= 0.0 || (s[k] <= 0.0 && x[i] <= f64::EPSILON * x.amax()) {
                    x[i] = 0.0;
                    passive[i] = false;
                    moved = true;
                }
            }
            if !moved {
                // numerical stall: drop the most negative coordinate
                let (k, _) = s.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                x[idx[k]] = 0.0;
                passive[idx[k]] = false;
            }
        }

        if x == before {
            // the entering column gave no progress; skip it until x changes
            blocked[j] = true;
        } else {
            for (i, blk) in blocked.iter_mut().enumerate() {
                *blk = norms[i] == 0.0;
            }
        }
    }

    let kkt = kkt_residual(a, b, &x);
    let residual_norm = (a * &x - b).norm();
    let x = unscale(&x, &norms);
    if kkt > tol {
        return Err(Error::Convergence { iterations, kkt_residual: kkt, best: x.iter().copied().collect() });
    }
    Ok(NnlsSolution { x, iterations, kkt_residual: kkt, residual_norm })
}

fn unscale(x: &DVector<f64>, norms: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(norms).map(|(&v, &c)| if c > 0.0 { v / c } else { 0.0 }))
}

pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    nnls_with(a, b, KKT_TOLERANCE, 10 * a.ncols().max(1))
}

/// Unconstrained least squares via SVD, minimum-norm on rank deficiency.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() || a.ncols() == 0 {
        return Err(Error::Domain("lstsq: bad shapes".into()));
    }
    let svd = a.clone().svd(true, true);
    let eps = f64::EPSILON * (a.nrows().max(a.ncols()) as f64) * svd.singular_values.max();
    svd.solve(b, eps).map_err(|e| Error::Domain(e.to_string()))
}
