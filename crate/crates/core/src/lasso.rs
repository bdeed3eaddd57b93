//! L1-penalized least squares by cyclic coordinate descent with
//! covariance (Gram) updates.
//!
//! The objective, in the scaled coordinates `u`, is
//!
//! ```text
//! (1/2m) | A diag(scale)^{-1} u - y |_2^2 + lambda |u|_1
//! ```
//!
//! and the returned coefficients live on the original parametrization,
//! `beta = diag(scale)^{-1} u`. Centering of the design and response is
//! the caller's responsibility: the statistics layer deliberately uses
//! two different centerings (stacked grand means for the fit, per-time
//! means for the residuals), so the solver must not subtract anything on
//! its own.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A penalized regression instance. `design` is m x d, `response` has
/// length m, `scale` holds the positive per-column scale factors
/// (typically the square roots of the column second moments).
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: Mat,
    pub response: Vec<f64>,
    pub lambda: f64,
    pub scale: Vec<f64>,
}

/// Solver output on the original (unscaled) parametrization.
#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Worst violation of the stationarity conditions at the returned point.
    pub kkt_gap: f64,
    pub converged: bool,
}

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Solve the penalized problem. Returns the best iterate flagged
/// `converged = false` if the sweep budget runs out.
pub fn lasso_fit(problem: &LassoProblem, tol: f64, max_iter: usize) -> Result<LassoSolution> {
    let m = problem.design.rows();
    let d = problem.design.cols();
    if problem.response.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {} entries",
            m,
            problem.response.len()
        )));
    }
    if problem.scale.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but scale has {} entries",
            d,
            problem.scale.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("empty design".into()));
    }
    if problem.lambda < 0.0 || problem.lambda.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be nonnegative, got {}",
            problem.lambda
        )));
    }
    if problem.scale.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::InvalidParameter(
            "scale entries must be positive".into(),
        ));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if !problem.design.is_finite() || !problem.response.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite design or response".into()));
    }

    // Gram and cross moments of the scaled design: G = (1/m) As^T As,
    // c = (1/m) As^T y with As = A diag(scale)^{-1}.
    let inv_m = 1.0 / m as f64;
    let mut gram = vec![0.0; d * d];
    let mut c = vec![0.0; d];
    for r in 0..m {
        let row = problem.design.row(r);
        let y = problem.response[r];
        for j in 0..d {
            let aj = row[j] / problem.scale[j];
            c[j] += aj * y;
            let gj = &mut gram[j * d..(j + 1) * d];
            for k in j..d {
                gj[k] += aj * row[k] / problem.scale[k];
            }
        }
    }
    for j in 0..d {
        c[j] *= inv_m;
        for k in j..d {
            let v = gram[j * d + k] * inv_m;
            gram[j * d + k] = v;
            gram[k * d + j] = v;
        }
    }

    let mut u = vec![0.0; d];
    let state = coordinate_descent(
        &GramView::Dense { gram: &gram, d },
        &c,
        problem.lambda,
        tol,
        max_iter,
        &mut u,
    );

    let coefficients: Vec<f64> = u
        .iter()
        .zip(&problem.scale)
        .map(|(ui, si)| ui / si)
        .collect();
    Ok(LassoSolution {
        coefficients,
        iterations: state.iterations,
        kkt_gap: state.kkt_gap,
        converged: state.converged,
    })
}

/// Default node penalty `kappa * sqrt(sigma_hat * log(p) / nq)`.
pub fn default_lambda(sigma_l_ii_hat: f64, p: usize, nq: usize, kappa: f64) -> f64 {
    debug_assert!(sigma_l_ii_hat > 0.0 && p >= 1 && nq >= 1 && kappa > 0.0);
    kappa * (sigma_l_ii_hat * (p as f64).ln() / nq as f64).sqrt()
}

/// Access to a Gram matrix either stored densely or as a scaled view
/// into a larger matrix (the node-wise regressions share one Gram of all
/// p columns and each node reads the submatrix excluding itself).
pub(crate) enum GramView<'a> {
    Dense {
        gram: &'a [f64],
        d: usize,
    },
    /// `entry(a, b) = full[map[a], map[b]] / (scale[map[a]] * scale[map[b]])`.
    Scaled {
        full: &'a crate::linalg::SymMatrix,
        map: &'a [usize],
        scale: &'a [f64],
    },
}

impl GramView<'_> {
    #[inline]
    fn dim(&self) -> usize {
        match self {
            GramView::Dense { d, .. } => *d,
            GramView::Scaled { map, .. } => map.len(),
        }
    }

    #[inline]
    fn at(&self, a: usize, b: usize) -> f64 {
        match self {
            GramView::Dense { gram, d } => gram[a * d + b],
            GramView::Scaled { full, map, scale } => {
                full.get(map[a], map[b]) / (scale[map[a]] * scale[map[b]])
            }
        }
    }
}

pub(crate) struct CdState {
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `(1/2) u^T G u - c^T u + lambda |u|_1`.
/// `u` carries the warm start in and the solution out.
pub(crate) fn coordinate_descent(
    gram: &GramView<'_>,
    c: &[f64],
    lambda: f64,
    tol: f64,
    max_iter: usize,
    u: &mut [f64],
) -> CdState {
    let d = gram.dim();
    debug_assert_eq!(c.len(), d);
    debug_assert_eq!(u.len(), d);

    // g = G u, maintained incrementally across coordinate updates.
    let mut g = vec![0.0; d];
    for j in 0..d {
        if u[j] != 0.0 {
            let uj = u[j];
            for k in 0..d {
                g[k] += gram.at(k, j) * uj;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            let gjj = gram.at(j, j);
            if gjj <= 0.0 {
                continue; // constant column: coefficient pinned at zero
            }
            let old = u[j];
            let partial = c[j] - (g[j] - gjj * old);
            let new = soft_threshold(partial, lambda) / gjj;
            if new != old {
                let delta = new - old;
                for k in 0..d {
                    g[k] += gram.at(k, j) * delta;
                }
                u[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }

    // Stationarity: |c_j - (Gu)_j| <= lambda at zeros, equal to
    // lambda * sign(u_j) on the active set.
    let mut kkt_gap: f64 = 0.0;
    for j in 0..d {
        if gram.at(j, j) <= 0.0 {
            continue;
        }
        let grad = c[j] - g[j];
        let viol = if u[j] == 0.0 {
            (grad.abs() - lambda).max(0.0)
        } else {
            (grad - lambda * u[j].signum()).abs()
        };
        kkt_gap = kkt_gap.max(viol);
    }

    CdState {
        iterations,
        kkt_gap,
        converged,
    }
}
