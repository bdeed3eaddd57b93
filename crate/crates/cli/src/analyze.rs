//! End-to-end analysis: whiten, fit, test globally, select edges with
//! FDR control, rank all pairs.

use serde::Serialize;

use matnet_core::inference::{fdr_threshold, global_test, FdrResult, GlobalTestResult};
use matnet_core::linalg::SymMatrix;
use matnet_core::stats::{run_pipeline, whiten_data_driven, whiten_oracle, LambdaPolicy};

use crate::error::{CliError, CliResult};
use crate::export::EdgeList;
use crate::ingest::{temporal_downsample, Dataset};

#[derive(Debug, Clone)]
pub enum AnalyzeMode {
    /// Whiten with a known temporal covariance.
    Oracle(SymMatrix),
    /// Estimate the temporal covariance from the data.
    DataDriven,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub mode: AnalyzeMode,
    pub alpha_global: f64,
    pub alpha_fdr: f64,
    pub lambda: LambdaPolicy,
    /// Average this many consecutive time points before testing.
    pub downsample: Option<usize>,
    /// Analyze only subjects carrying this group label.
    pub group: Option<String>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            mode: AnalyzeMode::DataDriven,
            alpha_global: 0.05,
            alpha_fdr: 0.1,
            lambda: LambdaPolicy::Tuned,
            downsample: None,
            group: None,
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Full analysis output; serializes to the versioned report JSON.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub schema_version: u32,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub mode: String,
    pub lambda_policy: String,
    /// Selected tuning grid position when the policy is `tuned`.
    pub b_hat: Option<usize>,
    pub node_labels: Vec<String>,
    pub warnings: Vec<String>,
    pub global: GlobalTestResult,
    pub fdr: FdrResult,
    /// Every pair, ranked by p-value.
    pub edges: EdgeList,
}

pub fn analyze(dataset: &Dataset, opts: &AnalyzeOptions) -> CliResult<InferenceReport> {
    let mut working = dataset.clone();
    if let Some(group) = &opts.group {
        working = working.filter_group(group);
        if working.records.is_empty() {
            return Err(CliError::Input(format!("no subjects in group '{group}'")));
        }
    }
    if working.records.len() < 2 {
        return Err(CliError::Input(format!(
            "analysis needs at least 2 subjects, found {}",
            working.records.len()
        )));
    }
    if let Some(window) = opts.downsample {
        let downsampled: CliResult<Vec<_>> = working
            .records
            .iter()
            .map(|r| temporal_downsample(r, window))
            .collect();
        working.records = downsampled?;
    }

    let x = working.to_sample()?;
    let whitened = match &opts.mode {
        AnalyzeMode::Oracle(sigma_t) => whiten_oracle(&x, sigma_t)?,
        AnalyzeMode::DataDriven => whiten_data_driven(&x)?,
    };
    let mut warnings = whitened.warnings().to_vec();
    // Degenerate-node errors carry the node index; surface the label.
    let labels = working.labels.clone();
    let pipeline = run_pipeline(&whitened, opts.lambda).map_err(|e| match e {
        matnet_core::Error::DegenerateData { node, detail } => {
            let named = node
                .parse::<usize>()
                .ok()
                .and_then(|i| labels.get(i).cloned())
                .unwrap_or(node);
            CliError::Degenerate(format!("degenerate data at node {named}: {detail}"))
        }
        other => CliError::from(other),
    })?;
    if !pipeline.regressions.all_converged() {
        warnings.push("one or more node regressions hit the sweep budget".into());
    }
    let global = global_test(&pipeline.statistics, opts.alpha_global)?;
    let fdr = fdr_threshold(&pipeline.statistics, opts.alpha_fdr)?;
    let edges = EdgeList::from_statistics(&pipeline.statistics, &working.labels);

    Ok(InferenceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n: x.n(),
        p: x.p(),
        q: x.q(),
        mode: match &opts.mode {
            AnalyzeMode::Oracle(_) => "oracle".into(),
            AnalyzeMode::DataDriven => "data_driven".into(),
        },
        lambda_policy: opts.lambda.to_string(),
        b_hat: pipeline.b_hat,
        node_labels: working.labels.clone(),
        warnings,
        global,
        fdr,
        edges,
    })
}
