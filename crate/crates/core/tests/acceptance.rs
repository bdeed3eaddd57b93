//! Acceptance suite: one test per operating-characteristic criterion,
//! each printing a PASS/FAIL line (run with `--nocapture` to see them).
//!
//! Criteria 3, 4, 6, and 7 share two 500-replication experiment runs at
//! p = 50, n = 30, q = 20 (null and eight-entry alternative); criterion 5
//! runs the 100-replication multiple-testing experiment at p = 50,
//! n = 20, q = 20 on the banded design. Desk-scale only: the larger
//! p = 400/800 grids from the tables stay reachable through experiment
//! configs but are not asserted here.

use std::sync::OnceLock;

use matnet_core::harness::{
    run_fdr_experiment, run_global_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput,
    Method,
};
use matnet_core::inference::{global_threshold, gumbel_cdf, gumbel_quantile};
use matnet_core::lasso::{lasso_fit, LassoProblem};
use matnet_core::linalg::{
    ar1_covariance, inv_sqrt, relative_floor, sym_eigendecomp, Mat, SymMatrix,
};
use matnet_core::matnorm::{sample_matrix_normal, KroneckerModel, ModelKind};
use matnet_core::rng::Rng;
use matnet_core::stats::{
    default_lambdas, fit_nodes, pair_statistics, whiten_data_driven, whiten_oracle, LambdaPolicy,
};

const GLOBAL_P: usize = 50;
const GLOBAL_N: usize = 30;
const GLOBAL_Q: usize = 20;
const GLOBAL_REPS: usize = 500;
const SUITE_SEED: u64 = 20_240_817;

fn global_cfg(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        p: GLOBAL_P,
        n: GLOBAL_N,
        q: GLOBAL_Q,
        model: None,
        alphas: vec![0.05],
        replications: GLOBAL_REPS,
        seed: SUITE_SEED,
        methods: vec![Method::Oracle, Method::DataDriven, Method::VectorNormal],
        lambda: LambdaPolicy::Kappa(2.0),
    }
}

fn null_run() -> &'static ExperimentOutput {
    static RUN: OnceLock<ExperimentOutput> = OnceLock::new();
    RUN.get_or_init(|| {
        run_global_experiment(&global_cfg(ExperimentKind::GlobalSize))
            .expect("null experiment failed")
    })
}

fn power_run() -> &'static ExperimentOutput {
    static RUN: OnceLock<ExperimentOutput> = OnceLock::new();
    RUN.get_or_init(|| {
        run_global_experiment(&global_cfg(ExperimentKind::GlobalPower))
            .expect("power experiment failed")
    })
}

fn rate_of(out: &ExperimentOutput, method: Method) -> f64 {
    out.report
        .rates
        .as_ref()
        .expect("global report carries rates")
        .iter()
        .find(|r| r.method == method && (r.alpha - 0.05).abs() < 1e-12)
        .expect("method present")
        .rate
}

fn report(criterion: &str, pass: bool, detail: String) {
    println!(
        "acceptance {:<28} {}  ({detail})",
        criterion,
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_01_closed_form_checks() {
    let q05 = gumbel_quantile(0.05).unwrap();
    let thr = global_threshold(50, 0.05).unwrap();
    // Exact closed-form values, independently derived at 40-digit
    // precision, asserted at the contract tolerances; the quantile must
    // also invert the limiting CDF to 1e-12.
    let q_ok = (q05 - 2.716219070555093).abs() <= 1e-6;
    let t_ok = (thr - 17.000256459379232).abs() <= 1e-5;
    let inv_ok = (gumbel_cdf(q05) - 0.95).abs() <= 1e-12;
    report(
        "1 closed-form",
        q_ok && t_ok && inv_ok,
        format!(
            "q(0.05) = {q05:.9}, threshold(50) = {thr:.9}, cdf residual {:.2e}",
            (gumbel_cdf(q05) - 0.95).abs()
        ),
    );
}

#[test]
fn criterion_02_whitening_reconstruction() {
    let mut worst: f64 = 0.0;
    for q in [5usize, 20, 30] {
        let sigma = ar1_covariance(q, 0.4).unwrap();
        let eig = sym_eigendecomp(&sigma).unwrap();
        let s = inv_sqrt(&sigma, relative_floor(&eig.values))
            .unwrap()
            .matrix;
        let prod = s
            .as_mat()
            .matmul(&s.as_mat())
            .unwrap()
            .matmul(&sigma.as_mat())
            .unwrap();
        for i in 0..q {
            for j in 0..q {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod.get(i, j) - target).abs());
            }
        }
    }
    report(
        "2 whitening",
        worst <= 1e-8,
        format!("max ||S*S*Sigma - I||_inf over q in {{5,20,30}} = {worst:.3e}"),
    );
}

#[test]
fn criterion_03_global_size() {
    let out = null_run();
    let oracle = rate_of(out, Method::Oracle);
    let data_driven = rate_of(out, Method::DataDriven);
    let vector = rate_of(out, Method::VectorNormal);
    let pass =
        (0.01..=0.08).contains(&oracle) && (0.01..=0.08).contains(&data_driven) && vector >= 0.20;
    report(
        "3 global size",
        pass,
        format!("oracle {oracle:.3}, data-driven {data_driven:.3}, vector-normal {vector:.3}"),
    );
}

#[test]
fn criterion_04_global_power() {
    let out = power_run();
    let oracle = rate_of(out, Method::Oracle);
    let data_driven = rate_of(out, Method::DataDriven);
    let pass = oracle >= 0.60 && data_driven >= 0.60;
    report(
        "4 global power",
        pass,
        format!("oracle {oracle:.3}, data-driven {data_driven:.3}"),
    );
}

#[test]
fn criterion_05_fdr_control_and_power() {
    let cfg = ExperimentConfig {
        kind: ExperimentKind::Fdr,
        p: 50,
        n: 20,
        q: 20,
        model: Some(ModelKind::Model1),
        alphas: vec![0.1],
        replications: 100,
        seed: SUITE_SEED + 1,
        methods: vec![Method::Oracle, Method::DataDriven, Method::VectorNormal],
        lambda: LambdaPolicy::Tuned,
    };
    let out = run_fdr_experiment(&cfg).expect("fdr experiment failed");
    let summaries = out.report.fdr.as_ref().unwrap();
    let find = |m: Method| summaries.iter().find(|s| s.method == m).unwrap();
    let oracle = find(Method::Oracle);
    let data_driven = find(Method::DataDriven);
    let vector = find(Method::VectorNormal);
    let pass = oracle.fdr <= 0.15
        && data_driven.fdr <= 0.15
        && oracle.power >= 0.90
        && data_driven.power >= 0.90
        && vector.fdr >= 0.15;
    report(
        "5 fdr control",
        pass,
        format!(
            "fdr o/d/v = {:.3}/{:.3}/{:.3}, power o/d = {:.3}/{:.3}",
            oracle.fdr, data_driven.fdr, vector.fdr, oracle.power, data_driven.power
        ),
    );
}

#[test]
fn criterion_06_gumbel_calibration() {
    let out = null_run();
    let ks = out
        .report
        .gumbel_ks
        .expect("null run records the KS distance");
    report(
        "6 gumbel calibration",
        ks <= 0.12,
        format!("KS distance over {GLOBAL_REPS} null replications = {ks:.4}"),
    );
}

#[test]
fn criterion_07_oracle_data_driven_agreement() {
    let size_gap =
        (rate_of(null_run(), Method::Oracle) - rate_of(null_run(), Method::DataDriven)).abs();
    let power_gap =
        (rate_of(power_run(), Method::Oracle) - rate_of(power_run(), Method::DataDriven)).abs();
    report(
        "7 oracle/data-driven",
        size_gap <= 0.03 && power_gap <= 0.05,
        format!("|size gap| = {size_gap:.4}, |power gap| = {power_gap:.4}"),
    );
}

#[test]
fn sanity_power_dominates_size_for_every_method() {
    // Not a numbered criterion: a consistency check across the shared
    // runs. Every method's rejection rate at the alternative must be at
    // least its rate under the null.
    for method in [Method::Oracle, Method::DataDriven, Method::VectorNormal] {
        let size = rate_of(null_run(), method);
        let power = rate_of(power_run(), method);
        assert!(
            power >= size,
            "{method:?}: power {power:.3} below size {size:.3}"
        );
    }
}

#[test]
fn criterion_08_estimator_quality_small_scale() {
    // p = 3, unit-diagonal precision with omega_12 = 0.5, oracle
    // whitening, unpenalized fits, nq = 5000, 200 replications: the mean
    // of T_12 lands within 3 SE of 0.5 and its bias is at most a third
    // of the uncorrected estimator's.
    let omega = SymMatrix::from_fn(3, |i, j| match (i, j) {
        _ if i == j => 1.0,
        (0, 1) => 0.5,
        _ => 0.0,
    });
    let (n, q) = (500usize, 10usize);
    let sigma_t = ar1_covariance(q, 0.4).unwrap();
    let model = KroneckerModel::from_precisions(omega, sigma_t.clone()).unwrap();
    let reps = 200;
    let mut t_vals = Vec::with_capacity(reps);
    let mut uncorrected = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = Rng::new(SUITE_SEED + 2).derive(rep as u64);
        let x = sample_matrix_normal(&model, n, &mut rng).unwrap();
        let w = whiten_oracle(&x, &sigma_t).unwrap();
        let reg = fit_nodes(&w, &[0.0, 0.0, 0.0]).unwrap();
        let stats = pair_statistics(&reg).unwrap();
        t_vals.push(stats.t(0, 1));

        // Uncorrected plug-in from the same residuals.
        let nq = (n * q) as f64;
        let mut r = [[0.0f64; 2]; 2];
        for k in 0..n {
            for l in 0..q {
                let e0 = reg.residual(k, 0, l);
                let e1 = reg.residual(k, 1, l);
                r[0][0] += e0 * e0;
                r[1][1] += e1 * e1;
                r[0][1] += e0 * e1;
            }
        }
        uncorrected.push(-(r[0][1] / nq) / ((r[0][0] / nq) * (r[1][1] / nq)));
    }
    let mean = t_vals.iter().sum::<f64>() / reps as f64;
    let var = t_vals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / reps as f64;
    let se = (var / reps as f64).sqrt();
    let mean_unc = uncorrected.iter().sum::<f64>() / reps as f64;
    let bias = (mean - 0.5).abs();
    let bias_unc = (mean_unc - 0.5).abs();
    let pass = bias <= 3.0 * se && bias <= bias_unc / 3.0;
    report(
        "8 estimator quality",
        pass,
        format!(
            "mean T = {mean:.4} (se {se:.4}), bias {bias:.5} vs uncorrected bias {bias_unc:.5}"
        ),
    );
}

#[test]
fn criterion_09_lasso_kkt() {
    let mut rng = Rng::new(SUITE_SEED + 3);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..100 {
        let d = 2 + (rng.below(49) as usize); // d <= 50
        let m = d + 5 + rng.below(60) as usize;
        let design = Mat::from_fn(m, d, |_, _| rng.normal());
        let response: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let mut s = 0.0;
            for r in 0..m {
                s += design.get(r, j).powi(2);
            }
            scale.push((s / m as f64).sqrt().max(1e-9));
        }
        let lambda = rng.uniform_in(0.0, 0.4);
        let problem = LassoProblem {
            design,
            response,
            lambda,
            scale,
        };
        let sol = lasso_fit(&problem, 1e-9, 100_000).unwrap();
        assert!(sol.converged, "trial {trial} did not converge");
        worst_gap = worst_gap.max(sol.kkt_gap);
    }
    report(
        "9 lasso kkt",
        worst_gap <= 1e-6,
        format!("worst stationarity gap over 100 problems = {worst_gap:.2e}"),
    );
}

#[test]
fn criterion_10_scale_invariance() {
    // Fixed p = 20 data-driven fixture; rescaling X by sqrt(c) must not
    // move any W by more than 1e-8.
    let (p, n, q) = (20usize, 25usize, 10usize);
    let sigma_t = ar1_covariance(q, 0.4).unwrap();
    let model = KroneckerModel::new(SymMatrix::identity(p), sigma_t).unwrap();
    let x = sample_matrix_normal(&model, n, &mut Rng::new(SUITE_SEED + 4)).unwrap();

    let w = whiten_data_driven(&x).unwrap();
    let lambdas = default_lambdas(&w, 2.0).unwrap();
    let base = pair_statistics(&fit_nodes(&w, &lambdas).unwrap()).unwrap();

    let mut worst: f64 = 0.0;
    for c in [0.25f64, 4.0] {
        let xs = x.scaled(c.sqrt());
        let ws = whiten_data_driven(&xs).unwrap();
        let ls = default_lambdas(&ws, 2.0).unwrap();
        let stats = pair_statistics(&fit_nodes(&ws, &ls).unwrap()).unwrap();
        for (i, j) in base.pairs() {
            worst = worst.max((stats.w(i, j) - base.w(i, j)).abs());
        }
    }
    report(
        "10 scale invariance",
        worst <= 1e-8,
        format!("max |delta W| over c in {{0.25, 4}} = {worst:.2e}"),
    );
}
