//! Decision layer: the global diagonality test with extreme-value
//! calibration and the FDR-controlled simultaneous edge test.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::phi;
use crate::stats::PairStatistics;

/// CDF of the limiting type I extreme value law,
/// `F(t) = exp(-(8 pi)^{-1/2} exp(-t/2))`.
pub fn gumbel_cdf(t: f64) -> f64 {
    let scale = (8.0 * std::f64::consts::PI).powf(-0.5);
    (-scale * (-t / 2.0).exp()).exp()
}

/// Closed-form 1 - alpha quantile of [`gumbel_cdf`]:
/// `q_alpha = -log(8 pi) - 2 log log (1 - alpha)^{-1}`.
pub fn gumbel_quantile(alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            alpha
        )));
    }
    Ok(-(8.0 * std::f64::consts::PI).ln() - 2.0 * (1.0 / (1.0 - alpha)).ln().ln())
}

/// Rejection threshold of the global test: `q_alpha + 4 log p - log log p`.
/// Requires p >= 3 so that `log log p` is positive.
pub fn global_threshold(p: usize, alpha: f64) -> Result<f64> {
    if p < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "global test requires p >= 3, got {}",
            p
        )));
    }
    let logp = (p as f64).ln();
    Ok(gumbel_quantile(alpha)? + 4.0 * logp - logp.ln())
}

/// Outcome of the global diagonality test.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalTestResult {
    /// `M = max over i < j of W_ij^2`.
    pub m_stat: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Asymptotic p-value, clipped to [0, 1].
    pub p_value: f64,
    /// The pair attaining the maximum.
    pub argmax_pair: (usize, usize),
}

impl GlobalTestResult {
    /// The centered statistic `M - 4 log p + log log p` whose null law is
    /// [`gumbel_cdf`].
    pub fn centered(&self, p: usize) -> f64 {
        let logp = (p as f64).ln();
        self.m_stat - 4.0 * logp + logp.ln()
    }
}

/// Global test of "the spatial precision matrix is diagonal".
pub fn global_test(stats: &PairStatistics, alpha: f64) -> Result<GlobalTestResult> {
    let p = stats.p();
    let threshold = global_threshold(p, alpha)?;
    let mut m_stat = f64::NEG_INFINITY;
    let mut argmax_pair = (0, 1);
    for (i, j) in stats.pairs() {
        let w2 = stats.w(i, j).powi(2);
        if w2 > m_stat {
            m_stat = w2;
            argmax_pair = (i, j);
        }
    }
    let logp = (p as f64).ln();
    let centered = m_stat - 4.0 * logp + logp.ln();
    let p_value = (1.0 - gumbel_cdf(centered)).clamp(0.0, 1.0);
    Ok(GlobalTestResult {
        m_stat,
        threshold,
        alpha,
        reject: m_stat >= threshold,
        p_value,
        argmax_pair,
    })
}

/// One rejected pair, with its statistic and two-sided normal p-value.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedEdge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub p_value: f64,
}

/// Outcome of the FDR-controlled simultaneous edge test.
#[derive(Debug, Clone, Serialize)]
pub struct FdrResult {
    /// Selected rejection threshold on |W|.
    pub t_hat: f64,
    pub alpha: f64,
    /// True when no threshold in the search range satisfied the criterion
    /// and `t_hat` fell back to `2 sqrt(log p)`.
    pub t_hat_capped: bool,
    /// Pairs with `|W| >= t_hat`, sorted by |W| descending.
    pub rejected: Vec<RejectedEdge>,
}

/// Threshold search for FDR control at level `alpha`:
///
/// ```text
/// t^ = inf{ 0 <= t <= 2 sqrt(log p) :
///           2 (1 - Phi(t)) (p^2 - p)/2 / max(R(t), 1) <= alpha }
/// ```
///
/// The rejection count R only changes at observed |W| values, so the
/// infimum over the candidate grid {0} + {observed |W| <= cap} yields
/// exactly the rejection set of the continuous search; when no candidate
/// qualifies, `t^` is capped at `2 sqrt(log p)`.
pub fn fdr_threshold(stats: &PairStatistics, alpha: f64) -> Result<FdrResult> {
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {}",
            alpha
        )));
    }
    let p = stats.p();
    let cap = 2.0 * (p as f64).ln().sqrt();
    let null_count = (p * p - p) as f64 / 2.0;

    let mut abs_w: Vec<f64> = stats.w_values().iter().map(|w| w.abs()).collect();
    abs_w.sort_by(|a, b| a.partial_cmp(b).expect("W statistics are finite"));
    let count_at_or_above = |t: f64| -> usize {
        // abs_w ascending: number of entries >= t.
        abs_w.len() - abs_w.partition_point(|v| *v < t)
    };

    let mut candidates: Vec<f64> = Vec::with_capacity(abs_w.len() + 1);
    candidates.push(0.0);
    candidates.extend(abs_w.iter().copied().filter(|v| *v <= cap));

    let mut t_hat = cap;
    let mut t_hat_capped = true;
    for &t in &candidates {
        let r = count_at_or_above(t).max(1) as f64;
        let expected_false = 2.0 * (1.0 - phi(t)) * null_count;
        if expected_false / r <= alpha {
            t_hat = t;
            t_hat_capped = false;
            break;
        }
    }

    let mut rejected: Vec<RejectedEdge> = stats
        .pairs()
        .filter_map(|(i, j)| {
            let w = stats.w(i, j);
            if w.abs() >= t_hat {
                Some(RejectedEdge {
                    i,
                    j,
                    w,
                    p_value: 2.0 * (1.0 - phi(w.abs())),
                })
            } else {
                None
            }
        })
        .collect();
    rejected.sort_by(|a, b| {
        b.w.abs()
            .partial_cmp(&a.w.abs())
            .expect("finite statistics")
    });

    Ok(FdrResult {
        t_hat,
        alpha,
        t_hat_capped,
        rejected,
    })
}
