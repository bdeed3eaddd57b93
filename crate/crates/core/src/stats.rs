//! Whitening, node-wise regressions, bias-corrected pair covariances,
//! and the standardized statistics the tests are built on.
//!
//! Writing `Y_k` for the transformed sample `X_k S` (with S the inverse
//! square root of the true or estimated temporal covariance), each
//! location i is regressed on all others over the nq stacked rows, and
//! for every pair i < j the residual cross-covariance is bias-corrected
//! and standardized:
//!
//! ```text
//! r~_ij    = (1/nq) sum_k sum_l  eps_{k,i,l} eps_{k,j,l}
//! r^_ij    = -(r~_ij + r~_ii b_{i,j} + r~_jj b_{j,i})        (i < j)
//! T_ij     = r^_ij / (r~_ii r~_jj)
//! theta_ij = (1 + b_{i,j}^2 r~_ii / r~_jj) / (nq r~_ii r~_jj)
//! W_ij     = T_ij / sqrt(theta_ij)
//! ```
//!
//! where `b_{i,j}` is the coefficient of location j in the regression of
//! location i. Two different centerings coexist on purpose: the lasso
//! fits use stacked grand means, the residuals use per-time-point means.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lasso::{self, coordinate_descent, GramView};
use crate::linalg::{inv_sqrt, relative_floor, sym_eigendecomp, Mat, SymMatrix};
use crate::matnorm::SpatioTemporalSample;
use crate::special::{phi, phi_inv};

/// Which transform produced the working data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenMode {
    /// Right-multiplied by the true `Sigma_T^{-1/2}`.
    Oracle,
    /// Right-multiplied by the estimated `Sigma_hat_T^{-1/2}`.
    DataDriven,
    /// No transform: the raw columns are treated as i.i.d. vectors
    /// (the vector-normal baseline).
    Raw,
}

/// Transformed samples ready for the regression stage.
#[derive(Debug, Clone)]
pub struct WhitenedData {
    y: SpatioTemporalSample,
    mode: WhitenMode,
    warnings: Vec<String>,
}

impl WhitenedData {
    /// Skip whitening entirely; used by the vector-normal baseline.
    pub fn raw(x: &SpatioTemporalSample) -> WhitenedData {
        WhitenedData {
            y: x.clone(),
            mode: WhitenMode::Raw,
            warnings: Vec::new(),
        }
    }

    pub fn tensor(&self) -> &SpatioTemporalSample {
        &self.y
    }

    pub fn mode(&self) -> WhitenMode {
        self.mode
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    pub fn p(&self) -> usize {
        self.y.p()
    }

    pub fn q(&self) -> usize {
        self.y.q()
    }

    pub fn nq(&self) -> usize {
        self.y.n() * self.y.q()
    }

    /// The nq x p matrix of stacked transformed rows, subject-major.
    pub fn stacked(&self) -> Mat {
        let (n, p, q) = (self.y.n(), self.y.p(), self.y.q());
        Mat::from_fn(n * q, p, |r, i| self.y.get(r / q, i, r % q))
    }
}

fn transform_tensor(x: &SpatioTemporalSample, s: &SymMatrix) -> Result<SpatioTemporalSample> {
    let mut subjects = Vec::with_capacity(x.n());
    for k in 0..x.n() {
        subjects.push(x.subject(k).matmul(&s.as_mat())?);
    }
    SpatioTemporalSample::from_subjects(&subjects)
}

/// Whiten with a known temporal covariance.
pub fn whiten_oracle(x: &SpatioTemporalSample, sigma_t: &SymMatrix) -> Result<WhitenedData> {
    if sigma_t.dim() != x.q() {
        return Err(Error::DimensionMismatch(format!(
            "temporal covariance is {}x{0} but data have q = {}",
            sigma_t.dim(),
            x.q()
        )));
    }
    let eig = sym_eigendecomp(sigma_t)?;
    let root = inv_sqrt(sigma_t, relative_floor(&eig.values))?;
    let mut warnings = Vec::new();
    if root.floored > 0 {
        warnings.push(format!(
            "temporal covariance is near-singular: {} eigenvalue(s) floored",
            root.floored
        ));
    }
    Ok(WhitenedData {
        y: transform_tensor(x, &root.matrix)?,
        mode: WhitenMode::Oracle,
        warnings,
    })
}

/// Estimate the temporal covariance as `(1/np) sum_k X_k^T X_k` and
/// whiten with its inverse square root. No trace normalization is
/// applied: any scalar factor cancels from the final statistics.
pub fn whiten_data_driven(x: &SpatioTemporalSample) -> Result<WhitenedData> {
    let (n, p, q) = (x.n(), x.p(), x.q());
    let mut acc = vec![0.0; q * q];
    for k in 0..n {
        for i in 0..p {
            for l1 in 0..q {
                let v1 = x.get(k, i, l1);
                for l2 in l1..q {
                    acc[l1 * q + l2] += v1 * x.get(k, i, l2);
                }
            }
        }
    }
    let denom = (n * p) as f64;
    let sigma_hat_t = SymMatrix::from_fn(q, |l1, l2| acc[l1 * q + l2] / denom);
    let eig = sym_eigendecomp(&sigma_hat_t)?;
    let root = inv_sqrt(&sigma_hat_t, relative_floor(&eig.values))?;
    let mut warnings = Vec::new();
    if root.floored > 0 {
        warnings.push(format!(
            "estimated temporal covariance is singular (np = {} < q = {}?): {} eigenvalue(s) floored",
            n * p,
            q,
            root.floored
        ));
    }
    Ok(WhitenedData {
        y: transform_tensor(x, &root.matrix)?,
        mode: WhitenMode::DataDriven,
        warnings,
    })
}

/// Node-wise regression results: one coefficient vector per location and
/// the per-time-point-centered residual tensor.
#[derive(Debug, Clone)]
pub struct NodeRegressions {
    n: usize,
    p: usize,
    q: usize,
    beta: Mat, // p x (p-1), row i = coefficients of the regression of node i
    residuals: Vec<f64>,
    lambda_used: Vec<f64>,
    converged: Vec<bool>,
}

impl NodeRegressions {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn nq(&self) -> usize {
        self.n * self.q
    }

    /// Coefficient of predictor `var` in the regression of `node`
    /// (`var != node`). Predictors keep their natural order with the
    /// node's own column removed.
    #[inline]
    pub fn coef(&self, node: usize, var: usize) -> f64 {
        debug_assert!(node != var);
        let a = if var < node { var } else { var - 1 };
        self.beta.get(node, a)
    }

    pub fn beta_row(&self, node: usize) -> &[f64] {
        self.beta.row(node)
    }

    #[inline]
    pub fn residual(&self, k: usize, i: usize, l: usize) -> f64 {
        self.residuals[(k * self.p + i) * self.q + l]
    }

    pub fn lambda_used(&self) -> &[f64] {
        &self.lambda_used
    }

    pub fn converged(&self) -> &[bool] {
        &self.converged
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Standardized pair statistics over the upper triangle i < j, packed
/// row-major.
#[derive(Debug, Clone)]
pub struct PairStatistics {
    p: usize,
    nq: usize,
    r_tilde_diag: Vec<f64>,
    r_hat: Vec<f64>,
    t_stat: Vec<f64>,
    theta_hat: Vec<f64>,
    w_stat: Vec<f64>,
}

impl PairStatistics {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    #[inline]
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.p);
        i * self.p - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn n_pairs(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    pub fn r_tilde_diag(&self) -> &[f64] {
        &self.r_tilde_diag
    }

    pub fn r_hat(&self, i: usize, j: usize) -> f64 {
        self.r_hat[self.pair_index(i, j)]
    }

    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.t_stat[self.pair_index(i, j)]
    }

    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.theta_hat[self.pair_index(i, j)]
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.w_stat[self.pair_index(i, j)]
    }

    pub fn w_values(&self) -> &[f64] {
        &self.w_stat
    }

    /// Upper-triangle pairs in packing order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.p;
        (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
    }
}

/// Everything the regression stage derives once per dataset: the stacked
/// grand-mean-centered design, its Gram matrix (the sample spatial
/// covariance of the transformed rows), and the per-time-point-centered
/// tensor for residuals.
struct Prepared {
    n: usize,
    p: usize,
    q: usize,
    m: usize,
    gram: SymMatrix,
    scale: Vec<f64>,
    y_tilde: Vec<f64>,
}

fn prepare(w: &WhitenedData) -> Result<Prepared> {
    let (n, p, q) = (w.n(), w.p(), w.q());
    let m = n * q;
    let stacked = w.stacked();

    let mut means = vec![0.0; p];
    for r in 0..m {
        for (mean, v) in means.iter_mut().zip(stacked.row(r)) {
            *mean += v;
        }
    }
    for mean in &mut means {
        *mean /= m as f64;
    }

    let mut centered = stacked;
    for r in 0..m {
        for (v, mean) in centered.row_mut(r).iter_mut().zip(&means) {
            *v -= mean;
        }
    }

    let mut acc = vec![0.0; p * p];
    for r in 0..m {
        let row = centered.row(r);
        for i in 0..p {
            let vi = row[i];
            let arow = &mut acc[i * p..(i + 1) * p];
            for j in i..p {
                arow[j] += vi * row[j];
            }
        }
    }
    let gram = SymMatrix::from_fn(p, |i, j| acc[i * p + j] / m as f64);

    let mut scale = Vec::with_capacity(p);
    for i in 0..p {
        let v = gram.get(i, i);
        if v <= 0.0 || v.is_nan() {
            return Err(Error::DegenerateData {
                node: i.to_string(),
                detail: "zero variance in transformed data".into(),
            });
        }
        scale.push(v.sqrt());
    }

    // Per-time-point centering for the residual stage.
    let mut y_tilde = vec![0.0; n * p * q];
    for i in 0..p {
        for l in 0..q {
            let mut mean = 0.0;
            for k in 0..n {
                mean += w.y.get(k, i, l);
            }
            mean /= n as f64;
            for k in 0..n {
                y_tilde[(k * p + i) * q + l] = w.y.get(k, i, l) - mean;
            }
        }
    }

    Ok(Prepared {
        n,
        p,
        q,
        m,
        gram,
        scale,
        y_tilde,
    })
}

/// Per-node penalties `kappa * sqrt(Sigma_hat_L[i,i] * log p / nq)`.
pub fn default_lambdas(w: &WhitenedData, kappa: f64) -> Result<Vec<f64>> {
    let prep = prepare(w)?;
    Ok((0..prep.p)
        .map(|i| lasso::default_lambda(prep.gram.get(i, i), prep.p, prep.m, kappa))
        .collect())
}

fn solve_nodes(prep: &Prepared, lambdas: &[f64], warm: &mut [Vec<f64>]) -> (Mat, Vec<bool>) {
    let p = prep.p;
    let results: Vec<(Vec<f64>, bool)> = warm
        .par_iter_mut()
        .enumerate()
        .map(|(i, u)| {
            let map: Vec<usize> = (0..p).filter(|&v| v != i).collect();
            let c: Vec<f64> = map
                .iter()
                .map(|&v| prep.gram.get(v, i) / prep.scale[v])
                .collect();
            let view = GramView::Scaled {
                full: &prep.gram,
                map: &map,
                scale: &prep.scale,
            };
            let state = coordinate_descent(
                &view,
                &c,
                lambdas[i],
                lasso::DEFAULT_TOL,
                lasso::DEFAULT_MAX_ITER,
                u,
            );
            let beta: Vec<f64> = u
                .iter()
                .zip(&map)
                .map(|(ui, &v)| ui / prep.scale[v])
                .collect();
            (beta, state.converged)
        })
        .collect();

    let mut beta = Mat::zeros(p, p - 1);
    let mut converged = Vec::with_capacity(p);
    for (i, (row, conv)) in results.into_iter().enumerate() {
        beta.row_mut(i).copy_from_slice(&row);
        converged.push(conv);
    }
    (beta, converged)
}

fn residual_tensor(prep: &Prepared, beta: &Mat) -> Vec<f64> {
    let (n, p, q) = (prep.n, prep.p, prep.q);
    let mut eps = prep.y_tilde.clone();
    // Active-set lists: skipping exact zeros leaves the sums unchanged.
    let actives: Vec<Vec<(usize, f64)>> = (0..p)
        .map(|i| {
            beta.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &b)| b != 0.0)
                .map(|(a, &b)| (if a < i { a } else { a + 1 }, b))
                .collect()
        })
        .collect();
    for k in 0..n {
        let base = k * p * q;
        for i in 0..p {
            let row = base + i * q;
            for &(v, b) in &actives[i] {
                let other = base + v * q;
                for l in 0..q {
                    eps[row + l] -= b * prep.y_tilde[other + l];
                }
            }
        }
    }
    eps
}

fn regressions_from_parts(
    prep: &Prepared,
    beta: Mat,
    converged: Vec<bool>,
    lambdas: &[f64],
) -> NodeRegressions {
    let residuals = residual_tensor(prep, &beta);
    NodeRegressions {
        n: prep.n,
        p: prep.p,
        q: prep.q,
        beta,
        residuals,
        lambda_used: lambdas.to_vec(),
        converged,
    }
}

/// Fit all p node regressions at the given per-node penalties.
pub fn fit_nodes(w: &WhitenedData, lambdas: &[f64]) -> Result<NodeRegressions> {
    let p = w.p();
    if lambdas.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} penalties for {} nodes",
            lambdas.len(),
            p
        )));
    }
    if lambdas.iter().any(|l| *l < 0.0 || !l.is_finite()) {
        return Err(Error::InvalidParameter(
            "penalties must be nonnegative".into(),
        ));
    }
    let prep = prepare(w)?;
    let mut warm: Vec<Vec<f64>> = vec![vec![0.0; p - 1]; p];
    let (beta, converged) = solve_nodes(&prep, lambdas, &mut warm);
    Ok(regressions_from_parts(&prep, beta, converged, lambdas))
}

/// Bias-corrected pair covariances and standardized statistics.
pub fn pair_statistics(reg: &NodeRegressions) -> Result<PairStatistics> {
    let (n, p, q) = (reg.n, reg.p, reg.q);
    let nq = (n * q) as f64;

    let mut r_full = vec![0.0; p * p];
    for k in 0..n {
        let base = k * p * q;
        for i in 0..p {
            let ri = &reg.residuals[base + i * q..base + (i + 1) * q];
            for j in i..p {
                let rj = &reg.residuals[base + j * q..base + (j + 1) * q];
                let mut s = 0.0;
                for (a, b) in ri.iter().zip(rj) {
                    s += a * b;
                }
                r_full[i * p + j] += s;
            }
        }
    }
    for v in &mut r_full {
        *v /= nq;
    }

    let mut r_tilde_diag = Vec::with_capacity(p);
    for i in 0..p {
        let v = r_full[i * p + i];
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::DegenerateData {
                node: i.to_string(),
                detail: format!("residual variance {} is not positive", v),
            });
        }
        r_tilde_diag.push(v);
    }

    let n_pairs = p * (p - 1) / 2;
    let mut r_hat = Vec::with_capacity(n_pairs);
    let mut t_stat = Vec::with_capacity(n_pairs);
    let mut theta_hat = Vec::with_capacity(n_pairs);
    let mut w_stat = Vec::with_capacity(n_pairs);
    for i in 0..p {
        for j in i + 1..p {
            let rt_ij = r_full[i * p + j];
            let b_ij = reg.coef(i, j);
            let b_ji = reg.coef(j, i);
            let rii = r_tilde_diag[i];
            let rjj = r_tilde_diag[j];
            let rh = -(rt_ij + rii * b_ij + rjj * b_ji);
            let t = rh / (rii * rjj);
            let theta = (1.0 + b_ij * b_ij * rii / rjj) / (nq * rii * rjj);
            r_hat.push(rh);
            t_stat.push(t);
            theta_hat.push(theta);
            w_stat.push(t / theta.sqrt());
        }
    }

    Ok(PairStatistics {
        p,
        nq: n * q,
        r_tilde_diag,
        r_hat,
        t_stat,
        theta_hat,
        w_stat,
    })
}

/// Outcome of the adaptive penalty search.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    /// Selected per-node penalties.
    pub lambdas: Vec<f64>,
    /// Selected grid position (1-based, penalty multiplier b/20).
    pub b_hat: usize,
    /// Tuning objective at every grid position, index b-1.
    pub objectives: Vec<f64>,
}

const TUNE_GRID: usize = 40;

/// Penalty tuning: scan `lambda_i = (b/20) sqrt(Sigma_hat_L[i,i] log p / nq)`
/// over b = 1..40 and pick the b whose tail counts of |W| best match the
/// standard normal across ten thresholds. Ties break toward smaller b.
pub fn tune_lambda(w: &WhitenedData) -> Result<LambdaSelection> {
    let p = w.p();
    if p < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "penalty tuning requires p >= 3, got {}",
            p
        )));
    }
    let prep = prepare(w)?;
    let m = prep.m as f64;
    let logp = (p as f64).ln();
    let base: Vec<f64> = (0..p)
        .map(|i| (prep.gram.get(i, i) * logp / m).sqrt())
        .collect();

    let tau = 1.0 - phi(logp.sqrt());
    let thresholds: Vec<f64> = (1..=10)
        .map(|s| phi_inv(1.0 - s as f64 * tau / 10.0))
        .collect();
    let denom: Vec<f64> = (1..=10)
        .map(|s| s as f64 * tau / 10.0 * (p * (p - 1)) as f64)
        .collect();

    let mut warm: Vec<Vec<f64>> = vec![vec![0.0; p - 1]; p];
    let mut objectives = vec![0.0; TUNE_GRID];
    for b in (1..=TUNE_GRID).rev() {
        let lambdas: Vec<f64> = base.iter().map(|v| b as f64 / 20.0 * v).collect();
        let (beta, converged) = solve_nodes(&prep, &lambdas, &mut warm);
        let reg = regressions_from_parts(&prep, beta, converged, &lambdas);
        let stats = pair_statistics(&reg)?;
        let mut obj = 0.0;
        for (t, d) in thresholds.iter().zip(&denom) {
            let count = stats.w_values().iter().filter(|w| w.abs() >= *t).count();
            let ratio = count as f64 / d - 1.0;
            obj += ratio * ratio;
        }
        objectives[b - 1] = obj;
    }

    let mut b_hat = 1;
    for b in 2..=TUNE_GRID {
        if objectives[b - 1] < objectives[b_hat - 1] {
            b_hat = b;
        }
    }
    let lambdas: Vec<f64> = base.iter().map(|v| b_hat as f64 / 20.0 * v).collect();
    Ok(LambdaSelection {
        lambdas,
        b_hat,
        objectives,
    })
}

/// How the node penalties are chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Fixed multiplier: `lambda_i = kappa sqrt(Sigma_hat_L[i,i] log p / nq)`.
    Kappa(f64),
    /// Data-adaptive grid search ([`tune_lambda`]).
    Tuned,
}

impl std::fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaPolicy::Kappa(k) => write!(f, "kappa:{}", k),
            LambdaPolicy::Tuned => write!(f, "tuned"),
        }
    }
}

impl std::str::FromStr for LambdaPolicy {
    type Err = Error;

    /// Accepts `tuned` or `kappa:<positive value>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "tuned" {
            return Ok(LambdaPolicy::Tuned);
        }
        if let Some(k) = s.strip_prefix("kappa:") {
            let k: f64 = k
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad kappa value in '{}'", s)))?;
            if k <= 0.0 || k.is_nan() {
                return Err(Error::Config("kappa must be positive".into()));
            }
            return Ok(LambdaPolicy::Kappa(k));
        }
        Err(Error::Config(format!(
            "penalty policy must be 'tuned' or 'kappa:<value>', got '{}'",
            s
        )))
    }
}

/// Full regression-and-statistics pass under a penalty policy.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub regressions: NodeRegressions,
    pub statistics: PairStatistics,
    pub b_hat: Option<usize>,
}

pub fn run_pipeline(w: &WhitenedData, policy: LambdaPolicy) -> Result<PipelineOutput> {
    let (lambdas, b_hat) = match policy {
        LambdaPolicy::Kappa(kappa) => {
            if kappa <= 0.0 || kappa.is_nan() {
                return Err(Error::InvalidParameter("kappa must be positive".into()));
            }
            (default_lambdas(w, kappa)?, None)
        }
        LambdaPolicy::Tuned => {
            let sel = tune_lambda(w)?;
            (sel.lambdas, Some(sel.b_hat))
        }
    };
    let regressions = fit_nodes(w, &lambdas)?;
    let statistics = pair_statistics(&regressions)?;
    Ok(PipelineOutput {
        regressions,
        statistics,
        b_hat,
    })
}

#[cfg(test)]
impl PairStatistics {
    /// Build a statistics object with prescribed W values and placeholder
    /// covariance fields, for exercising the decision layer in isolation.
    pub(crate) fn synthetic(
        p: usize,
        nq: usize,
        w_by_pair: impl Fn(usize, usize) -> f64,
    ) -> PairStatistics {
        let n_pairs = p * (p - 1) / 2;
        let mut w_stat = Vec::with_capacity(n_pairs);
        for i in 0..p {
            for j in i + 1..p {
                w_stat.push(w_by_pair(i, j));
            }
        }
        let theta = 1.0 / nq as f64;
        PairStatistics {
            p,
            nq,
            r_tilde_diag: vec![1.0; p],
            r_hat: w_stat.iter().map(|w| w * theta.sqrt()).collect(),
            t_stat: w_stat.iter().map(|w| w * theta.sqrt()).collect(),
            theta_hat: vec![theta; n_pairs],
            w_stat,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ar1_covariance;
    use crate::matnorm::{sample_matrix_normal, KroneckerModel};
    use crate::rng::Rng;

    fn identity_sample(seed: u64, n: usize, p: usize, q: usize) -> SpatioTemporalSample {
        let model = KroneckerModel::new(SymMatrix::identity(p), SymMatrix::identity(q)).unwrap();
        sample_matrix_normal(&model, n, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn oracle_identity_whitening_is_identity() {
        let x = identity_sample(1, 4, 3, 5);
        let w = whiten_oracle(&x, &SymMatrix::identity(5)).unwrap();
        for k in 0..4 {
            for i in 0..3 {
                for l in 0..5 {
                    assert!((w.tensor().get(k, i, l) - x.get(k, i, l)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_scalar_whitening_rescales() {
        let x = identity_sample(2, 4, 3, 5);
        let four_i = SymMatrix::identity(5).scale(4.0);
        let w = whiten_oracle(&x, &four_i).unwrap();
        for k in 0..4 {
            for i in 0..3 {
                for l in 0..5 {
                    assert!((w.tensor().get(k, i, l) - x.get(k, i, l) / 2.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn oracle_whitening_dimension_check() {
        let x = identity_sample(3, 4, 3, 5);
        assert!(whiten_oracle(&x, &SymMatrix::identity(4)).is_err());
    }

    #[test]
    fn data_driven_whitening_is_consistent_at_identity() {
        // With Sigma_T = I and np large, the estimated whitener is close
        // to the identity and Y stays close to X.
        let x = identity_sample(6, 500, 20, 4); // np = 10000
        let w = whiten_data_driven(&x).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..500 {
            for i in 0..20 {
                for l in 0..4 {
                    num += (w.tensor().get(k, i, l) - x.get(k, i, l)).powi(2);
                    den += x.get(k, i, l).powi(2);
                }
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.05, "relative whitening distortion {rel}");
        assert!(w.warnings().is_empty());
    }

    #[test]
    fn data_driven_whitening_warns_when_estimate_is_singular() {
        // np < q makes the estimated temporal covariance rank-deficient;
        // the eigenvalue floor absorbs it and a warning is emitted.
        let x = identity_sample(7, 2, 2, 8);
        let w = whiten_data_driven(&x).unwrap();
        assert!(!w.warnings().is_empty());
        assert!(w.tensor().get(0, 0, 0).is_finite());
    }

    #[test]
    fn data_driven_with_q_one_divides_by_root_mean_square() {
        let x = identity_sample(4, 6, 4, 1);
        let w = whiten_data_driven(&x).unwrap();
        let mut msq = 0.0;
        for k in 0..6 {
            for i in 0..4 {
                msq += x.get(k, i, 0) * x.get(k, i, 0);
            }
        }
        msq /= 24.0;
        for k in 0..6 {
            for i in 0..4 {
                let want = x.get(k, i, 0) / msq.sqrt();
                assert!((w.tensor().get(k, i, 0) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_recomputation_identity() {
        let x = identity_sample(5, 8, 5, 6);
        let w = whiten_data_driven(&x).unwrap();
        let lambdas = default_lambdas(&w, 2.0).unwrap();
        let reg = fit_nodes(&w, &lambdas).unwrap();

        // Recompute from the definition with the same accumulation order.
        let (n, p, q) = (w.n(), w.p(), w.q());
        for i in 0..p {
            for l in 0..q {
                let mut mean_i = 0.0;
                for k in 0..n {
                    mean_i += w.tensor().get(k, i, l);
                }
                mean_i /= n as f64;
                for k in 0..n {
                    let mut r = w.tensor().get(k, i, l) - mean_i;
                    for v in 0..p {
                        if v == i {
                            continue;
                        }
                        let b = reg.coef(i, v);
                        if b == 0.0 {
                            continue;
                        }
                        let mut mean_v = 0.0;
                        for kk in 0..n {
                            mean_v += w.tensor().get(kk, v, l);
                        }
                        mean_v /= n as f64;
                        r -= b * (w.tensor().get(k, v, l) - mean_v);
                    }
                    assert_eq!(
                        r,
                        reg.residual(k, i, l),
                        "residual mismatch at ({k},{i},{l})"
                    );
                }
            }
        }
    }

    #[test]
    fn null_large_sample_coefficients_stay_small() {
        // Omega_L = I: every regression slope is zero in truth.
        let x = identity_sample(7, 100, 8, 20); // nq = 2000
        let w = whiten_oracle(&x, &SymMatrix::identity(20)).unwrap();
        let lambdas = default_lambdas(&w, 2.0).unwrap();
        let reg = fit_nodes(&w, &lambdas).unwrap();
        for i in 0..8 {
            for &b in reg.beta_row(i) {
                assert!(b.abs() <= 0.05, "slope {} too large under the null", b);
            }
        }
    }

    #[test]
    fn two_node_slope_recovers_negative_partial_coefficient() {
        // p = 2, Omega = [[1, .5], [.5, 1]]: beta_1 = -omega_12/omega_11 = -0.5.
        let omega = SymMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.5 });
        let model = KroneckerModel::from_precisions(omega, SymMatrix::identity(10)).unwrap();
        let x = sample_matrix_normal(&model, 400, &mut Rng::new(21)).unwrap(); // nq = 4000
        let w = whiten_oracle(&x, &SymMatrix::identity(10)).unwrap();
        let reg = fit_nodes(&w, &[0.0, 0.0]).unwrap();
        assert!(
            (reg.coef(0, 1) + 0.5).abs() < 0.06,
            "beta_0(1) = {}, want about -0.5",
            reg.coef(0, 1)
        );
        assert!((reg.coef(1, 0) + 0.5).abs() < 0.06);
    }

    #[test]
    fn pair_statistics_null_algebra() {
        // Orthogonal sign patterns: exactly zero cross-covariance, and a
        // penalty large enough that every slope is zero. Then r^ and W
        // vanish identically. n = 4 subjects, p = 2 nodes, q = 1.
        let col0 = [1.0, 1.0, -1.0, -1.0];
        let col1 = [1.0, -1.0, 1.0, -1.0];
        let mut flat = Vec::new();
        for k in 0..4 {
            flat.push(col0[k]);
            flat.push(col1[k]);
        }
        let x = SpatioTemporalSample::new(4, 2, 1, flat).unwrap();
        let w = WhitenedData::raw(&x);
        let reg = fit_nodes(&w, &[10.0, 10.0]).unwrap();
        assert!(reg.beta_row(0).iter().all(|&b| b == 0.0));
        assert!(reg.beta_row(1).iter().all(|&b| b == 0.0));
        let stats = pair_statistics(&reg).unwrap();
        assert_eq!(stats.r_hat(0, 1), 0.0);
        assert_eq!(stats.w(0, 1), 0.0);
        assert!(stats.theta(0, 1) > 0.0);
    }

    #[test]
    fn pair_statistics_definitional_consistency() {
        let x = identity_sample(11, 16, 4, 4);
        let w = WhitenedData::raw(&x);
        let lambdas = default_lambdas(&w, 2.0).unwrap();
        let reg = fit_nodes(&w, &lambdas).unwrap();
        let stats = pair_statistics(&reg).unwrap();
        for (i, j) in stats.pairs() {
            let rh = stats.r_hat(i, j);
            let t = stats.t(i, j);
            let rii = stats.r_tilde_diag()[i];
            let rjj = stats.r_tilde_diag()[j];
            assert!((t - rh / (rii * rjj)).abs() < 1e-13);
            assert!(stats.theta(i, j) > 0.0);
            assert!(stats.w(i, j).is_finite());
            assert_eq!(stats.w(i, j), t / stats.theta(i, j).sqrt());
        }
    }

    #[test]
    fn brute_force_oracle_p3_fixes_index_mapping() {
        // p = 3 with an asymmetric precision pattern so that a swapped
        // beta index mapping produces visibly wrong statistics.
        let omega = SymMatrix::from_fn(3, |i, j| match (i, j) {
            (0, 0) | (1, 1) | (2, 2) => 1.0,
            (0, 1) => 0.45,
            (1, 2) => -0.3,
            _ => 0.0,
        });
        let model =
            KroneckerModel::from_precisions(omega, ar1_covariance(4, 0.4).unwrap()).unwrap();
        let x = sample_matrix_normal(&model, 50, &mut Rng::new(33)).unwrap();
        let w = whiten_data_driven(&x).unwrap();
        let lambdas = vec![0.01, 0.02, 0.03];
        let reg = fit_nodes(&w, &lambdas).unwrap();
        let stats = pair_statistics(&reg).unwrap();

        // Independent recomputation of every statistic from definitions.
        let (n, p, q) = (w.n(), w.p(), w.q());
        let nq = (n * q) as f64;
        let mut r = [[0.0; 3]; 3];
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..q {
                        s += reg.residual(k, i, l) * reg.residual(k, j, l);
                    }
                }
                r[i][j] = s / nq;
            }
        }
        for i in 0..p {
            for j in i + 1..p {
                // Position of predictor j in regression i is j-1 for j > i
                // (0-based row with own column removed), and the position
                // of predictor i in regression j is i.
                let b_ij = reg.beta_row(i)[j - 1];
                let b_ji = reg.beta_row(j)[i];
                let r_hat = -(r[i][j] + r[i][i] * b_ij + r[j][j] * b_ji);
                let t = r_hat / (r[i][i] * r[j][j]);
                let theta = (1.0 + b_ij * b_ij * r[i][i] / r[j][j]) / (nq * r[i][i] * r[j][j]);
                let w_stat = t / theta.sqrt();
                assert!((stats.r_hat(i, j) - r_hat).abs() < 1e-13);
                assert!((stats.t(i, j) - t).abs() < 1e-13);
                assert!((stats.theta(i, j) - theta).abs() < 1e-15);
                assert!(
                    (stats.w(i, j) - w_stat).abs() < 1e-10,
                    "W mismatch at ({i},{j}): {} vs {}",
                    stats.w(i, j),
                    w_stat
                );
            }
        }
    }

    #[test]
    fn permuting_locations_permutes_w() {
        let omega = SymMatrix::from_fn(4, |i, j| match (i, j) {
            _ if i == j => 1.0,
            (0, 2) => 0.4,
            (1, 3) => -0.35,
            _ => 0.0,
        });
        let model =
            KroneckerModel::from_precisions(omega, ar1_covariance(3, 0.4).unwrap()).unwrap();
        let x = sample_matrix_normal(&model, 60, &mut Rng::new(17)).unwrap();
        let perm = [2usize, 0, 3, 1];

        // Permute locations in the raw tensor.
        let (n, p, q) = (x.n(), x.p(), x.q());
        let mut data = vec![0.0; n * p * q];
        for k in 0..n {
            for i in 0..p {
                for l in 0..q {
                    data[(k * p + i) * q + l] = x.get(k, perm[i], l);
                }
            }
        }
        let xp = SpatioTemporalSample::new(n, p, q, data).unwrap();

        let w = whiten_oracle(&x, model.sigma_t()).unwrap();
        let wp = whiten_oracle(&xp, model.sigma_t()).unwrap();
        let lam = default_lambdas(&w, 2.0).unwrap();
        let lam_p: Vec<f64> = (0..p).map(|i| lam[perm[i]]).collect();
        let reg = fit_nodes(&w, &lam).unwrap();
        let stats = pair_statistics(&reg).unwrap();
        let stats_p = pair_statistics(&fit_nodes(&wp, &lam_p).unwrap()).unwrap();

        // theta (and hence W) depends on which node of the pair comes
        // first, so recompute the original statistic with the roles the
        // permutation induces.
        let nq = (x.n() * x.q()) as f64;
        for i in 0..p {
            for j in i + 1..p {
                let (first, second) = (perm[i], perm[j]);
                let (a, b) = (first.min(second), first.max(second));
                let t = stats.t(a, b);
                let rff = stats.r_tilde_diag()[first];
                let rss = stats.r_tilde_diag()[second];
                let b_fs = reg.coef(first, second);
                let theta = (1.0 + b_fs * b_fs * rff / rss) / (nq * rff * rss);
                let expect_w = t / theta.sqrt();
                assert!(
                    (stats_p.w(i, j) - expect_w).abs() < 1e-6,
                    "relabeling changed W at ({i},{j}): {} vs {}",
                    stats_p.w(i, j),
                    expect_w
                );
            }
        }
    }

    #[test]
    fn data_driven_scale_invariance() {
        let sigma_t = ar1_covariance(6, 0.4).unwrap();
        let model = KroneckerModel::new(SymMatrix::identity(10), sigma_t).unwrap();
        let x = sample_matrix_normal(&model, 30, &mut Rng::new(5)).unwrap();
        let w = whiten_data_driven(&x).unwrap();
        let lam = default_lambdas(&w, 2.0).unwrap();
        let base = pair_statistics(&fit_nodes(&w, &lam).unwrap()).unwrap();
        for c in [0.25_f64, 4.0] {
            let xs = x.scaled(c.sqrt());
            let ws = whiten_data_driven(&xs).unwrap();
            let lams = default_lambdas(&ws, 2.0).unwrap();
            let stats = pair_statistics(&fit_nodes(&ws, &lams).unwrap()).unwrap();
            for (i, j) in base.pairs() {
                assert!(
                    (stats.w(i, j) - base.w(i, j)).abs() <= 1e-8,
                    "W changed under scaling c = {c} at ({i},{j}): {} vs {}",
                    stats.w(i, j),
                    base.w(i, j)
                );
            }
        }
    }

    #[test]
    fn tuning_is_deterministic_and_finite() {
        let x = identity_sample(12, 40, 10, 10);
        let w = whiten_data_driven(&x).unwrap();
        let a = tune_lambda(&w).unwrap();
        let b = tune_lambda(&w).unwrap();
        assert_eq!(a.b_hat, b.b_hat);
        assert_eq!(a.lambdas, b.lambdas);
        assert!(a.objectives.iter().all(|o| o.is_finite() && *o >= 0.0));
        assert_eq!(a.objectives.len(), 40);
    }

    #[test]
    fn tune_rejects_tiny_p() {
        let x = identity_sample(13, 10, 2, 4);
        let w = WhitenedData::raw(&x);
        assert!(tune_lambda(&w).is_err());
    }

    #[test]
    fn pipeline_reports_tuned_b() {
        let x = identity_sample(14, 20, 6, 8);
        let w = whiten_data_driven(&x).unwrap();
        let out = run_pipeline(&w, LambdaPolicy::Tuned).unwrap();
        assert!(out.b_hat.is_some());
        let out2 = run_pipeline(&w, LambdaPolicy::Kappa(2.0)).unwrap();
        assert!(out2.b_hat.is_none());
        assert_eq!(out2.statistics.n_pairs(), 6 * 5 / 2);
    }
}
