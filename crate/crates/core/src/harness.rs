//! Seeded experiment orchestration: size and power of the global test,
//! empirical FDR and power of the multiple test, and the vector-normal
//! baseline that ignores the temporal dependence.
//!
//! Replications run in parallel on independently derived sub-seeds and
//! all three methods see the same sampled data within a replication, so
//! method comparisons are paired and a configuration reproduces its
//! report bit for bit regardless of thread count.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fdr_threshold, global_test, gumbel_cdf};
use crate::linalg::ar1_covariance;
use crate::matnorm::{
    build_global_alternative, build_model, null_spatial, sample_matrix_normal, true_edges,
    KroneckerModel, ModelKind, SpatioTemporalSample,
};
use crate::rng::Rng;
use crate::stats::{
    run_pipeline, whiten_data_driven, whiten_oracle, LambdaPolicy, PairStatistics, WhitenedData,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Temporal covariance used by all experiments: AR(1) with rho = 0.4.
pub const TEMPORAL_RHO: f64 = 0.4;

/// Whitening strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    DataDriven,
    VectorNormal,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Oracle => write!(f, "oracle"),
            Method::DataDriven => write!(f, "data_driven"),
            Method::VectorNormal => write!(f, "vector_normal"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "oracle" => Ok(Method::Oracle),
            "data_driven" => Ok(Method::DataDriven),
            "vector_normal" => Ok(Method::VectorNormal),
            other => Err(Error::Config(format!("unknown method '{}'", other))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GlobalSize,
    GlobalPower,
    Fdr,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentKind::GlobalSize => write!(f, "global_size"),
            ExperimentKind::GlobalPower => write!(f, "global_power"),
            ExperimentKind::Fdr => write!(f, "fdr"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub p: usize,
    pub n: usize,
    pub q: usize,
    /// Ground-truth design; required for (and only used by) FDR experiments.
    pub model: Option<ModelKind>,
    pub alphas: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub lambda: LambdaPolicy,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if self.n < 2 || self.q < 1 {
            return Err(Error::InvalidParameter("need n >= 2 and q >= 1".into()));
        }
        if self.p < 3 {
            return Err(Error::InvalidParameter("need p >= 3".into()));
        }
        if self.kind == ExperimentKind::GlobalPower && self.p < 8 {
            return Err(Error::InvalidParameter(
                "the global-power alternative needs p >= 8".into(),
            ));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParameter("levels must lie in (0, 1)".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one method required".into(),
            ));
        }
        if self.kind == ExperimentKind::Fdr && self.model.is_none() {
            return Err(Error::InvalidParameter(
                "fdr experiments need a model".into(),
            ));
        }
        if let LambdaPolicy::Kappa(k) = self.lambda {
            if k <= 0.0 || k.is_nan() {
                return Err(Error::InvalidParameter("kappa must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parse from flat `key = value` text. Documented keys: experiment,
    /// p, n, q, model, alphas, replications, seed, methods, lambda.
    /// Lines starting with `#` are comments.
    pub fn from_key_values(text: &str) -> Result<ExperimentConfig> {
        let mut kind = None;
        let mut p = None;
        let mut n = None;
        let mut q = None;
        let mut model = None;
        let mut alphas: Option<Vec<f64>> = None;
        let mut replications = None;
        let mut seed = None;
        let mut methods: Option<Vec<Method>> = None;
        let mut lambda = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("line {}: {}", lineno + 1, what));
            match key {
                "experiment" => {
                    kind = Some(match value {
                        "global_size" => ExperimentKind::GlobalSize,
                        "global_power" => ExperimentKind::GlobalPower,
                        "fdr" => ExperimentKind::Fdr,
                        other => return Err(bad(&format!("unknown experiment '{}'", other))),
                    })
                }
                "p" => p = Some(value.parse().map_err(|_| bad("p must be an integer"))?),
                "n" => n = Some(value.parse().map_err(|_| bad("n must be an integer"))?),
                "q" => q = Some(value.parse().map_err(|_| bad("q must be an integer"))?),
                "model" => {
                    model = Some(match value {
                        "model1" => ModelKind::Model1,
                        "model2" => ModelKind::Model2,
                        "model3" => ModelKind::Model3,
                        other => return Err(bad(&format!("unknown model '{}'", other))),
                    })
                }
                "alphas" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    alphas = Some(parsed.map_err(|_| bad("alphas must be numbers"))?);
                }
                "replications" => {
                    replications = Some(
                        value
                            .parse()
                            .map_err(|_| bad("replications must be an integer"))?,
                    )
                }
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed must be a u64"))?),
                "methods" => {
                    let parsed: Result<Vec<Method>> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    methods = Some(parsed?);
                }
                "lambda" => lambda = Some(value.parse::<LambdaPolicy>()?),
                other => return Err(bad(&format!("unknown key '{}'", other))),
            }
        }

        let kind = kind.ok_or_else(|| Error::Config("missing key 'experiment'".into()))?;
        let cfg = ExperimentConfig {
            kind,
            p: p.ok_or_else(|| Error::Config("missing key 'p'".into()))?,
            n: n.ok_or_else(|| Error::Config("missing key 'n'".into()))?,
            q: q.ok_or_else(|| Error::Config("missing key 'q'".into()))?,
            model,
            alphas: alphas.unwrap_or_else(|| match kind {
                ExperimentKind::Fdr => vec![0.1],
                _ => vec![0.05],
            }),
            replications: replications
                .ok_or_else(|| Error::Config("missing key 'replications'".into()))?,
            seed: seed.ok_or_else(|| Error::Config("missing key 'seed'".into()))?,
            methods: methods
                .unwrap_or_else(|| vec![Method::Oracle, Method::DataDriven, Method::VectorNormal]),
            lambda: lambda.unwrap_or(match kind {
                ExperimentKind::Fdr => LambdaPolicy::Tuned,
                _ => LambdaPolicy::Kappa(2.0),
            }),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One flat record per (replication, method, level); the audit CSV is a
/// direct dump of these.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub method: Method,
    pub alpha: f64,
    pub reject: Option<bool>,
    pub m_stat: Option<f64>,
    pub rejections: Option<usize>,
    pub false_positives: Option<usize>,
    pub fdp: Option<f64>,
    pub tpp: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    pub method: Method,
    pub alpha: f64,
    /// Rejection frequency: size under the null, power at the alternative.
    pub rate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdrPowerSummary {
    pub method: Method,
    pub alpha: f64,
    pub fdr: f64,
    pub fdr_se: f64,
    pub power: f64,
    pub power_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rates: Option<Vec<RateSummary>>,
    pub fdr: Option<Vec<FdrPowerSummary>>,
    /// Kolmogorov-Smirnov distance between the oracle null statistics
    /// `M - 4 log p + log log p` and the limiting extreme value law; only
    /// produced by global-size runs that include the oracle method.
    pub gumbel_ks: Option<f64>,
    pub elapsed_secs: f64,
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub rows: Vec<ReplicationRow>,
}

fn binomial_se(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

fn whiten_for(
    method: Method,
    x: &SpatioTemporalSample,
    model: &KroneckerModel,
) -> Result<WhitenedData> {
    match method {
        Method::Oracle => whiten_oracle(x, model.sigma_t()),
        Method::DataDriven => whiten_data_driven(x),
        Method::VectorNormal => Ok(WhitenedData::raw(x)),
    }
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

struct GlobalRep {
    m_stat: f64,
    centered: f64,
    rejects: Vec<bool>,
}

/// Size or power of the global diagonality test. Under `GlobalSize` the
/// spatial precision is the identity; under `GlobalPower` it carries
/// eight random off-diagonal entries redrawn each replication.
pub fn run_global_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.kind == ExperimentKind::Fdr {
        return Err(Error::InvalidParameter(
            "run_global_experiment expects a global experiment kind".into(),
        ));
    }
    let started = Instant::now();
    let sigma_t = ar1_covariance(cfg.q, TEMPORAL_RHO)?;

    let per_rep: Result<Vec<Vec<GlobalRep>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let root = Rng::new(cfg.seed).derive(rep as u64);
            let mut model_rng = root.derive(0);
            let mut noise_rng = root.derive(1);
            let omega = match cfg.kind {
                ExperimentKind::GlobalSize => null_spatial(cfg.p),
                ExperimentKind::GlobalPower => {
                    build_global_alternative(cfg.p, cfg.n, cfg.q, &mut model_rng)?
                }
                ExperimentKind::Fdr => unreachable!(),
            };
            let model = KroneckerModel::from_precisions(omega, sigma_t.clone())?;
            let x = sample_matrix_normal(&model, cfg.n, &mut noise_rng)?;
            let mut out = Vec::with_capacity(cfg.methods.len());
            for &method in &cfg.methods {
                let w = whiten_for(method, &x, &model)?;
                let pipeline = run_pipeline(&w, cfg.lambda)?;
                let mut rejects = Vec::with_capacity(cfg.alphas.len());
                let mut m_stat = 0.0;
                let mut centered = 0.0;
                for &alpha in &cfg.alphas {
                    let g = global_test(&pipeline.statistics, alpha)?;
                    rejects.push(g.reject);
                    m_stat = g.m_stat;
                    centered = g.centered(cfg.p);
                }
                out.push(GlobalRep {
                    m_stat,
                    centered,
                    rejects,
                });
            }
            Ok(out)
        })
        .collect();
    let per_rep = per_rep?;

    let mut rows = Vec::new();
    let mut rates = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let hits = per_rep
                .iter()
                .filter(|methods| methods[mi].rejects[ai])
                .count();
            let rate = hits as f64 / cfg.replications as f64;
            debug_assert!((0.0..=1.0).contains(&rate));
            rates.push(RateSummary {
                method,
                alpha,
                rate,
                se: binomial_se(rate, cfg.replications),
            });
        }
    }
    for (rep, methods) in per_rep.iter().enumerate() {
        for (mi, &method) in cfg.methods.iter().enumerate() {
            for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                rows.push(ReplicationRow {
                    replication: rep,
                    method,
                    alpha,
                    reject: Some(methods[mi].rejects[ai]),
                    m_stat: Some(methods[mi].m_stat),
                    rejections: None,
                    false_positives: None,
                    fdp: None,
                    tpp: None,
                });
            }
        }
    }

    let gumbel_ks = if cfg.kind == ExperimentKind::GlobalSize {
        cfg.methods
            .iter()
            .position(|&m| m == Method::Oracle)
            .map(|mi| {
                let centered: Vec<f64> = per_rep.iter().map(|ms| ms[mi].centered).collect();
                ks_distance(&centered, gumbel_cdf)
            })
    } else {
        None
    };

    Ok(ExperimentOutput {
        report: ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: cfg.clone(),
            rates: Some(rates),
            fdr: None,
            gumbel_ks,
            elapsed_secs: started.elapsed().as_secs_f64(),
        },
        rows,
    })
}

struct FdrRep {
    per_alpha: Vec<(usize, usize, f64, f64)>, // rejections, false positives, fdp, tpp
}

/// Empirical FDR and power of the multiple-testing procedure against a
/// ground-truth design redrawn each replication.
pub fn run_fdr_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::Fdr {
        return Err(Error::InvalidParameter(
            "run_fdr_experiment expects kind = fdr".into(),
        ));
    }
    let started = Instant::now();
    let model_kind = cfg.model.expect("validated");
    let sigma_t = ar1_covariance(cfg.q, TEMPORAL_RHO)?;

    let per_rep: Result<Vec<Vec<FdrRep>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let root = Rng::new(cfg.seed).derive(rep as u64);
            let mut model_rng = root.derive(0);
            let mut noise_rng = root.derive(1);
            let omega = build_model(model_kind, cfg.p, &mut model_rng)?;
            let edges = true_edges(&omega);
            if edges.is_empty() {
                return Err(Error::InvalidInput(
                    "ground-truth model has no edges; power undefined".into(),
                ));
            }
            let truth: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
            let model = KroneckerModel::from_precisions(omega, sigma_t.clone())?;
            let x = sample_matrix_normal(&model, cfg.n, &mut noise_rng)?;
            let mut out = Vec::with_capacity(cfg.methods.len());
            for &method in &cfg.methods {
                let w = whiten_for(method, &x, &model)?;
                let pipeline = run_pipeline(&w, cfg.lambda)?;
                let mut per_alpha = Vec::with_capacity(cfg.alphas.len());
                for &alpha in &cfg.alphas {
                    let res = fdr_threshold(&pipeline.statistics, alpha)?;
                    let rejections = res.rejected.len();
                    let false_pos = res
                        .rejected
                        .iter()
                        .filter(|e| !truth.contains(&(e.i, e.j)))
                        .count();
                    let fdp = false_pos as f64 / rejections.max(1) as f64;
                    let tpp = (rejections - false_pos) as f64 / truth.len() as f64;
                    per_alpha.push((rejections, false_pos, fdp, tpp));
                }
                out.push(FdrRep { per_alpha });
            }
            Ok(out)
        })
        .collect();
    let per_rep = per_rep?;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            let mut fdp_sum = 0.0;
            let mut tpp_sum = 0.0;
            for methods in &per_rep {
                let (_, _, fdp, tpp) = methods[mi].per_alpha[ai];
                fdp_sum += fdp;
                tpp_sum += tpp;
            }
            let reps = cfg.replications as f64;
            let fdr = fdp_sum / reps;
            let power = tpp_sum / reps;
            // Reported uncertainties use the binomial width at the
            // observed rate, the same convention as the global report.
            let fdr_se = binomial_se(fdr, cfg.replications);
            let power_se = binomial_se(power, cfg.replications);
            debug_assert!((0.0..=1.0).contains(&fdr) && (0.0..=1.0).contains(&power));
            summaries.push(FdrPowerSummary {
                method,
                alpha,
                fdr,
                fdr_se,
                power,
                power_se,
            });
        }
    }
    for (rep, methods) in per_rep.iter().enumerate() {
        for (mi, &method) in cfg.methods.iter().enumerate() {
            for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                let (rejections, false_pos, fdp, tpp) = methods[mi].per_alpha[ai];
                rows.push(ReplicationRow {
                    replication: rep,
                    method,
                    alpha,
                    reject: None,
                    m_stat: None,
                    rejections: Some(rejections),
                    false_positives: Some(false_pos),
                    fdp: Some(fdp),
                    tpp: Some(tpp),
                });
            }
        }
    }

    Ok(ExperimentOutput {
        report: ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: cfg.clone(),
            rates: None,
            fdr: Some(summaries),
            gumbel_ks: None,
            elapsed_secs: started.elapsed().as_secs_f64(),
        },
        rows,
    })
}

/// The vector-normal baseline of the comparisons: the full statistic
/// pipeline on the raw stacked columns, never whitening, at the default
/// penalty kappa = 2.
pub fn vector_normal_baseline(x: &SpatioTemporalSample) -> Result<PairStatistics> {
    let w = WhitenedData::raw(x);
    Ok(run_pipeline(&w, LambdaPolicy::Kappa(2.0))?.statistics)
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize the report as pretty JSON (atomic temp-file rename).
pub fn write_report_json(report: &ExperimentReport, path: &Path) -> Result<()> {
    let body =
        serde_json::to_string_pretty(report).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    write_atomic(path, &format!("{}\n", body))
}

/// Dump per-replication rows as CSV for audit (atomic temp-file rename).
pub fn write_rows_csv(rows: &[ReplicationRow], path: &Path) -> Result<()> {
    let mut out =
        String::from("replication,method,alpha,reject,m_stat,rejections,false_positives,fdp,tpp\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.replication,
            r.method,
            r.alpha,
            r.reject.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt(r.m_stat),
            r.rejections.map(|v| v.to_string()).unwrap_or_default(),
            r.false_positives.map(|v| v.to_string()).unwrap_or_default(),
            fmt_opt(r.fdp),
            fmt_opt(r.tpp),
        ));
    }
    write_atomic(path, &out)
}
