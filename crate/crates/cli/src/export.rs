//! Ranked edge lists and their on-disk formats (CSV, DOT, JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use matnet_core::special::phi;
use matnet_core::stats::PairStatistics;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    /// 0-based node indices with i < j.
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub p_value: f64,
    /// 1-based rank in p-value order.
    pub rank: usize,
}

/// All location pairs ranked by two-sided normal p-value (ascending),
/// ties broken by |W| descending then index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeList {
    pub node_labels: Vec<String>,
    pub entries: Vec<EdgeEntry>,
}

impl EdgeList {
    pub fn from_statistics(stats: &PairStatistics, labels: &[String]) -> EdgeList {
        let mut entries: Vec<EdgeEntry> = stats
            .pairs()
            .map(|(i, j)| {
                let w = stats.w(i, j);
                EdgeEntry {
                    i,
                    j,
                    w,
                    p_value: 2.0 * (1.0 - phi(w.abs())),
                    rank: 0,
                }
            })
            .collect();
        entries.sort_by(|a, b| {
            a.p_value
                .partial_cmp(&b.p_value)
                .expect("finite p-values")
                .then(b.w.abs().partial_cmp(&a.w.abs()).expect("finite W"))
                .then(a.i.cmp(&b.i))
                .then(a.j.cmp(&b.j))
        });
        for (r, e) in entries.iter_mut().enumerate() {
            e.rank = r + 1;
        }
        EdgeList {
            node_labels: labels.to_vec(),
            entries,
        }
    }

    pub fn truncated(&self, top_k: usize) -> EdgeList {
        EdgeList {
            node_labels: self.node_labels.clone(),
            entries: self.entries.iter().take(top_k).cloned().collect(),
        }
    }

    fn label(&self, idx: usize) -> &str {
        self.node_labels.get(idx).map(String::as_str).unwrap_or("?")
    }

    /// CSV with one leading `# nodes:` metadata line carrying the node
    /// labels, then `rank,i,j,label_i,label_j,w,p_value` rows with
    /// 1-based indices. Floats print in shortest round-trip form, so
    /// re-importing reproduces the list exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# nodes: {}\n", self.node_labels.join("|")));
        out.push_str("rank,i,j,label_i,label_j,w,p_value\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.rank,
                e.i + 1,
                e.j + 1,
                self.label(e.i),
                self.label(e.j),
                e.w,
                e.p_value
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> CliResult<EdgeList> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Input("empty edge CSV".into()))?;
        let node_labels: Vec<String> = header
            .strip_prefix("# nodes: ")
            .ok_or_else(|| CliError::Input("edge CSV must start with '# nodes: ...'".into()))?
            .split('|')
            .map(|s| s.to_string())
            .collect();
        let columns = lines
            .next()
            .ok_or_else(|| CliError::Input("edge CSV missing column header".into()))?;
        if columns != "rank,i,j,label_i,label_j,w,p_value" {
            return Err(CliError::Input(format!(
                "unexpected edge CSV columns: {columns}"
            )));
        }
        let mut entries = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(CliError::Input(format!(
                    "edge CSV row {}: expected 7 fields, got {}",
                    ln + 3,
                    fields.len()
                )));
            }
            let parse_usize = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| {
                    CliError::Input(format!("edge CSV row {}: bad {what} '{s}'", ln + 3))
                })
            };
            let parse_f64 = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| {
                    CliError::Input(format!("edge CSV row {}: bad {what} '{s}'", ln + 3))
                })
            };
            entries.push(EdgeEntry {
                rank: parse_usize(fields[0], "rank")?,
                i: parse_usize(fields[1], "index")? - 1,
                j: parse_usize(fields[2], "index")? - 1,
                w: parse_f64(fields[5], "w")?,
                p_value: parse_f64(fields[6], "p_value")?,
            });
        }
        Ok(EdgeList {
            node_labels,
            entries,
        })
    }

    /// Undirected DOT graph with every node declared and one edge line
    /// per entry, carrying w and p-value attributes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph connectivity {\n");
        for label in &self.node_labels {
            out.push_str(&format!("    \"{}\";\n", label));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "    \"{}\" -- \"{}\" [w=\"{}\", p=\"{}\", rank=\"{}\"];\n",
                self.label(e.i),
                self.label(e.j),
                e.w,
                e.p_value,
                e.rank
            ));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "dot" => Ok(ExportFormat::Dot),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(CliError::Input(format!("unknown export format '{other}'"))),
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let tmp = path.with_file_name(format!(
        "{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents).map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(())
}

/// Write the edge list (optionally truncated to the top k) in the given
/// format, atomically.
pub fn export_network(
    edges: &EdgeList,
    fmt: ExportFormat,
    top_k: Option<usize>,
    path: &Path,
) -> CliResult<()> {
    let edges = match top_k {
        Some(k) => edges.truncated(k),
        None => edges.clone(),
    };
    let body = match fmt {
        ExportFormat::Json => edges.to_json()?,
        ExportFormat::Dot => edges.to_dot(),
        ExportFormat::Csv => edges.to_csv(),
    };
    write_atomic(path, &body)
}
