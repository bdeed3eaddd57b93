//! `matnet`: test the conditional-independence network of spatial
//! locations from matrix-variate (locations x time) observations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matnet_cli::analyze::{analyze, AnalyzeMode, AnalyzeOptions};
use matnet_cli::error::{CliError, CliResult};
use matnet_cli::export::{export_network, EdgeList, ExportFormat};
use matnet_cli::ingest::{load_dataset, load_matrix_csv, Dataset};
use matnet_core::harness::{
    run_fdr_experiment, run_global_experiment, write_report_json, write_rows_csv, ExperimentConfig,
    ExperimentKind,
};
use matnet_core::stats::{tune_lambda, whiten_data_driven, whiten_oracle, LambdaPolicy};

#[derive(Parser)]
#[command(
    name = "matnet",
    version,
    about = "Spatial conditional-independence testing for locations x time matrix data",
    long_about = "Tests whether spatial locations are conditionally independent given \
                  matrix-variate observations with separable spatial-temporal covariance. \
                  Provides a global diagonality test of the spatial precision matrix, \
                  FDR-controlled edge selection, ranked edge-list export, and a seeded \
                  simulation harness."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory of per-subject CSVs (time rows x channel columns) or a
    /// single long CSV with a subject_id,time_index,... header.
    #[arg(long)]
    input: PathBuf,

    /// Whitening mode: data-driven (estimate the temporal covariance) or
    /// oracle (requires --sigma-t).
    #[arg(long, default_value = "data-driven")]
    mode: String,

    /// Known temporal covariance as a headerless q x q CSV (oracle mode).
    #[arg(long)]
    sigma_t: Option<PathBuf>,

    /// Average this many consecutive time points before testing
    /// (must divide q).
    #[arg(long)]
    downsample: Option<usize>,

    /// Analyze only subjects with this group label (long CSV input).
    #[arg(long)]
    group: Option<String>,
}

impl DataArgs {
    fn load(&self) -> CliResult<(Dataset, AnalyzeMode)> {
        let dataset = load_dataset(&self.input)?;
        let mode = match self.mode.as_str() {
            "data-driven" | "data_driven" => AnalyzeMode::DataDriven,
            "oracle" => {
                let path = self.sigma_t.as_ref().ok_or_else(|| {
                    CliError::Input("oracle mode requires --sigma-t <csv>".into())
                })?;
                AnalyzeMode::Oracle(load_matrix_csv(path)?)
            }
            other => {
                return Err(CliError::Input(format!(
                    "unknown mode '{other}' (expected data-driven or oracle)"
                )))
            }
        };
        Ok((dataset, mode))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment from a key-value config file and write
    /// report JSON plus a per-replication CSV.
    Simulate {
        /// Flat `key = value` config; see the README for the keys.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json and replications.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Seed to use when the config file omits `seed`
        /// (the config file takes precedence).
        #[arg(long)]
        seed: Option<u64>,
        /// Replication count when the config omits `replications`
        /// (the config file takes precedence).
        #[arg(long)]
        replications: Option<usize>,
    },

    /// Run the full analysis: global test, FDR edge selection, ranked
    /// edge list.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha_global: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha_fdr: f64,
        /// Penalty policy: tuned or kappa:<value>.
        #[arg(long, default_value = "tuned")]
        lambda: String,
        /// Write the full report JSON here (stdout summary otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export the ranked edge list to this path.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Edge export format: csv, dot, or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Keep only the k most significant pairs in the edge export.
        #[arg(long)]
        top_k: Option<usize>,
    },

    /// Global test of "all locations are conditionally independent".
    GlobalTest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Penalty policy: tuned or kappa:<value>.
        #[arg(long, default_value = "kappa:2")]
        lambda: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// FDR-controlled simultaneous edge selection.
    FdrTest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Penalty policy: tuned or kappa:<value>.
        #[arg(long, default_value = "tuned")]
        lambda: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Select the node penalties adaptively and print the grid position
    /// and per-node values.
    Tune {
        #[command(flatten)]
        data: DataArgs,
    },

    /// Re-export a previously saved edge CSV as csv, dot, or json.
    Export {
        /// Edge CSV produced by analyze/fdr-test.
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

fn parse_lambda(s: &str) -> CliResult<LambdaPolicy> {
    s.parse::<LambdaPolicy>().map_err(CliError::from)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let body = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    match out {
        Some(path) => {
            let tmp = path.with_file_name(format!(
                "{}.tmp",
                path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
            ));
            std::fs::write(&tmp, format!("{body}\n"))
                .map_err(|e| CliError::Other(e.to_string()))?;
            std::fs::rename(&tmp, path).map_err(|e| CliError::Other(e.to_string()))?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn run_simulate(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    replications: Option<usize>,
) -> CliResult<()> {
    let mut text = std::fs::read_to_string(config)?;
    let has_key = |text: &str, key: &str| {
        text.lines()
            .any(|l| l.trim_start().starts_with(key) && l.contains('='))
    };
    // Flag values only fill gaps; the config file wins.
    if let Some(s) = seed {
        if !has_key(&text, "seed") {
            text.push_str(&format!("\nseed = {s}\n"));
        }
    }
    if let Some(r) = replications {
        if !has_key(&text, "replications") {
            text.push_str(&format!("\nreplications = {r}\n"));
        }
    }
    let cfg = ExperimentConfig::from_key_values(&text)?;
    let output = match cfg.kind {
        ExperimentKind::Fdr => run_fdr_experiment(&cfg)?,
        _ => run_global_experiment(&cfg)?,
    };
    std::fs::create_dir_all(out_dir)?;
    let report_path = out_dir.join(format!("{}_report.json", cfg.kind));
    let csv_path = out_dir.join(format!("{}_replications.csv", cfg.kind));
    write_report_json(&output.report, &report_path)?;
    write_rows_csv(&output.rows, &csv_path)?;
    eprintln!(
        "wrote {} and {} ({} replications, {:.1}s)",
        report_path.display(),
        csv_path.display(),
        cfg.replications,
        output.report.elapsed_secs
    );
    if let Some(rates) = &output.report.rates {
        for r in rates {
            println!(
                "{}\talpha={}\trate={:.4}\tse={:.4}",
                r.method, r.alpha, r.rate, r.se
            );
        }
    }
    if let Some(fdr) = &output.report.fdr {
        for s in fdr {
            println!(
                "{}\talpha={}\tfdr={:.4}\tpower={:.4}",
                s.method, s.alpha, s.fdr, s.power
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Command::Simulate {
            config,
            out_dir,
            seed,
            replications,
        } => run_simulate(&config, &out_dir, seed, replications),
        Command::Analyze {
            data,
            alpha_global,
            alpha_fdr,
            lambda,
            out,
            edges,
            format,
            top_k,
        } => {
            let (dataset, mode) = data.load()?;
            let opts = AnalyzeOptions {
                mode,
                alpha_global,
                alpha_fdr,
                lambda: parse_lambda(&lambda)?,
                downsample: data.downsample,
                group: data.group.clone(),
            };
            let report = analyze(&dataset, &opts)?;
            if let Some(edge_path) = edges {
                let fmt: ExportFormat = format.parse()?;
                export_network(&report.edges, fmt, top_k, &edge_path)?;
            }
            eprintln!(
                "global: M = {:.3}, threshold = {:.3}, reject = {}, p = {:.3e}; \
                 fdr: t = {:.3}{}, {} pairs selected",
                report.global.m_stat,
                report.global.threshold,
                report.global.reject,
                report.global.p_value,
                report.fdr.t_hat,
                if report.fdr.t_hat_capped {
                    " (capped)"
                } else {
                    ""
                },
                report.fdr.rejected.len()
            );
            write_json(&report, out.as_deref())
        }
        Command::GlobalTest {
            data,
            alpha,
            lambda,
            out,
        } => {
            let (dataset, mode) = data.load()?;
            let opts = AnalyzeOptions {
                mode,
                alpha_global: alpha,
                lambda: parse_lambda(&lambda)?,
                downsample: data.downsample,
                group: data.group.clone(),
                ..AnalyzeOptions::default()
            };
            let report = analyze(&dataset, &opts)?;
            write_json(&report.global, out.as_deref())
        }
        Command::FdrTest {
            data,
            alpha,
            lambda,
            out,
        } => {
            let (dataset, mode) = data.load()?;
            let opts = AnalyzeOptions {
                mode,
                alpha_fdr: alpha,
                lambda: parse_lambda(&lambda)?,
                downsample: data.downsample,
                group: data.group.clone(),
                ..AnalyzeOptions::default()
            };
            let report = analyze(&dataset, &opts)?;
            write_json(&report.fdr, out.as_deref())
        }
        Command::Tune { data } => {
            let (dataset, mode) = data.load()?;
            let mut working = dataset;
            if let Some(group) = &data.group {
                working = working.filter_group(group);
            }
            if let Some(window) = data.downsample {
                let rec: CliResult<Vec<_>> = working
                    .records
                    .iter()
                    .map(|r| matnet_cli::ingest::temporal_downsample(r, window))
                    .collect();
                working.records = rec?;
            }
            let x = working.to_sample()?;
            let whitened = match mode {
                AnalyzeMode::Oracle(sigma_t) => whiten_oracle(&x, &sigma_t)?,
                AnalyzeMode::DataDriven => whiten_data_driven(&x)?,
            };
            let selection = tune_lambda(&whitened)?;
            #[derive(serde::Serialize)]
            struct TuneOut {
                b_hat: usize,
                lambdas: Vec<f64>,
                objectives: Vec<f64>,
            }
            write_json(
                &TuneOut {
                    b_hat: selection.b_hat,
                    lambdas: selection.lambdas,
                    objectives: selection.objectives,
                },
                None,
            )
        }
        Command::Export {
            edges,
            format,
            out,
            top_k,
        } => {
            let body = std::fs::read_to_string(&edges)?;
            let list = EdgeList::from_csv(&body)?;
            let fmt: ExportFormat = format.parse()?;
            export_network(&list, fmt, top_k, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
