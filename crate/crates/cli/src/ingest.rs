//! Dataset ingestion and temporal downsampling.
//!
//! Two layouts are accepted:
//!
//! * a directory with one CSV per subject, q rows (time) by p columns
//!   (channels), no header; the file stem is the subject id;
//! * a single "long" CSV with a header `subject_id,time_index,<name>...`
//!   (optionally a `group` column right after `time_index`); channel
//!   names come from the header.
//!
//! Subject matrices are stored p x q (locations by time), so directory
//! files are transposed on load.

use std::path::Path;

use matnet_core::linalg::{Mat, SymMatrix};
use matnet_core::matnorm::SpatioTemporalSample;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub id: String,
    /// p x q: rows are channels/locations, columns are time points.
    pub matrix: Mat,
    pub group: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.records.first().map(|r| r.matrix.rows()).unwrap_or(0)
    }

    pub fn q(&self) -> usize {
        self.records.first().map(|r| r.matrix.cols()).unwrap_or(0)
    }

    /// Keep only subjects with the given group label.
    pub fn filter_group(self, group: &str) -> Dataset {
        let records = self
            .records
            .into_iter()
            .filter(|r| r.group.as_deref() == Some(group))
            .collect();
        Dataset {
            records,
            labels: self.labels,
        }
    }

    pub fn to_sample(&self) -> CliResult<SpatioTemporalSample> {
        let mats: Vec<Mat> = self.records.iter().map(|r| r.matrix.clone()).collect();
        SpatioTemporalSample::from_subjects(&mats).map_err(CliError::from)
    }
}

fn parse_cell(raw: &str, context: &str, row: usize, col: usize) -> CliResult<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        CliError::Input(format!(
            "{context}: non-numeric cell '{raw}' at row {}, column {}",
            row + 1,
            col + 1
        ))
    })
}

/// Load a dataset from a directory of per-subject CSVs or a single long
/// CSV file.
pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "path does not exist: {}",
            path.display()
        )));
    }
    if path.is_dir() {
        load_directory(path)
    } else {
        load_long_csv(path)
    }
}

fn load_directory(dir: &Path) -> CliResult<Dataset> {
    let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "no .csv files found in {}",
            dir.display()
        )));
    }

    let mut records = Vec::with_capacity(files.len());
    let mut dims: Option<(usize, usize)> = None;
    for file in files {
        let id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("subject")
            .to_string();
        let body = std::fs::read_to_string(&file)?;
        // Rows are time points, columns are channels.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for (c, cell) in line.split(',').enumerate() {
                row.push(parse_cell(cell, &format!("subject '{id}'"), r, c)?);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::Input(format!("subject '{id}': empty file")));
        }
        let q = rows.len();
        let p = rows[0].len();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(CliError::Input(format!(
                    "subject '{id}': row {} has {} columns, expected {}",
                    r + 1,
                    row.len(),
                    p
                )));
            }
        }
        if let Some((p0, q0)) = dims {
            if (p, q) != (p0, q0) {
                return Err(CliError::Input(format!(
                    "subject '{id}' is {q} x {p} (time x channels) but earlier subjects are {q0} x {p0}"
                )));
            }
        } else {
            dims = Some((p, q));
        }
        // Transpose to p x q.
        let matrix = Mat::from_fn(p, q, |i, l| rows[l][i]);
        records.push(SubjectRecord {
            id,
            matrix,
            group: None,
        });
    }
    let p = dims.unwrap().0;
    let labels = (1..=p).map(|i| format!("V{i}")).collect();
    Ok(Dataset { records, labels })
}

fn load_long_csv(file: &Path) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(file)
        .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(e.to_string()))?
        .clone();
    let cols: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "time_index" {
        return Err(CliError::Input(
            "long CSV header must start with 'subject_id,time_index' followed by channel names"
                .into(),
        ));
    }
    let has_group = cols.get(2).is_some_and(|c| c == "group");
    let first_channel = if has_group { 3 } else { 2 };
    let labels: Vec<String> = cols[first_channel..].to_vec();
    if labels.is_empty() {
        return Err(CliError::Input("long CSV has no channel columns".into()));
    }
    let p = labels.len();

    struct Accum {
        group: Option<String>,
        rows: Vec<(i64, Vec<f64>)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_subject: std::collections::HashMap<String, Accum> = std::collections::HashMap::new();

    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(e.to_string()))?;
        if record.len() != cols.len() {
            return Err(CliError::Input(format!(
                "row {}: {} fields, expected {}",
                r + 2,
                record.len(),
                cols.len()
            )));
        }
        let id = record[0].to_string();
        let time: i64 = record[1].parse().map_err(|_| {
            CliError::Input(format!(
                "row {}: time_index '{}' is not an integer",
                r + 2,
                &record[1]
            ))
        })?;
        let group = if has_group {
            Some(record[2].to_string())
        } else {
            None
        };
        let mut values = Vec::with_capacity(p);
        for (c, cell) in record.iter().skip(first_channel).enumerate() {
            values.push(parse_cell(
                cell,
                &format!("subject '{id}'"),
                r + 1,
                c + first_channel,
            )?);
        }
        if !by_subject.contains_key(&id) {
            order.push(id.clone());
        }
        let acc = by_subject.entry(id).or_insert_with(|| Accum {
            group,
            rows: Vec::new(),
        });
        acc.rows.push((time, values));
    }

    if order.is_empty() {
        return Err(CliError::Input("long CSV contains no data rows".into()));
    }
    let mut records = Vec::with_capacity(order.len());
    let mut q0: Option<usize> = None;
    for id in order {
        let mut acc = by_subject.remove(&id).expect("accumulated");
        acc.rows.sort_by_key(|(t, _)| *t);
        let q = acc.rows.len();
        if let Some(q0) = q0 {
            if q != q0 {
                return Err(CliError::Input(format!(
                    "subject '{id}' has {q} time points but earlier subjects have {q0}"
                )));
            }
        } else {
            q0 = Some(q);
        }
        let matrix = Mat::from_fn(p, q, |i, l| acc.rows[l].1[i]);
        records.push(SubjectRecord {
            id,
            matrix,
            group: acc.group,
        });
    }
    Ok(Dataset { records, labels })
}

/// Average each window of consecutive time points; the window length
/// must divide q.
pub fn temporal_downsample(rec: &SubjectRecord, window: usize) -> CliResult<SubjectRecord> {
    let (p, q) = (rec.matrix.rows(), rec.matrix.cols());
    if window < 1 || q % window != 0 {
        return Err(CliError::Input(format!(
            "downsampling window {window} must be >= 1 and divide q = {q}"
        )));
    }
    let q_new = q / window;
    let matrix = Mat::from_fn(p, q_new, |i, l| {
        let mut s = 0.0;
        for o in 0..window {
            s += rec.matrix.get(i, l * window + o);
        }
        s / window as f64
    });
    Ok(SubjectRecord {
        id: rec.id.clone(),
        matrix,
        group: rec.group.clone(),
    })
}

/// Load a q x q symmetric matrix from a headerless numeric CSV (used for
/// the oracle temporal covariance).
pub fn load_matrix_csv(path: &Path) -> CliResult<SymMatrix> {
    let body = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            row.push(parse_cell(cell, &format!("{}", path.display()), r, c)?);
        }
        rows.push(row);
    }
    SymMatrix::from_rows(&rows, 1e-8).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) {
        let mut f = std::fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    #[test]
    fn directory_of_subject_files() {
        let dir = tempfile::tempdir().unwrap();
        // 4 time rows x 2 channel columns -> p = 2, q = 4.
        for (name, scale) in [("s1.csv", 1.0), ("s2.csv", 2.0), ("s3.csv", 3.0)] {
            let mut body = String::new();
            for t in 0..4 {
                body.push_str(&format!(
                    "{},{}\n",
                    scale * t as f64,
                    scale * (t + 10) as f64
                ));
            }
            write_file(dir.path(), name, &body);
        }
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.q(), 4);
        assert_eq!(ds.records[0].id, "s1");
        // File rows are time: entry (channel 1, time 2) of s2 is 2 * 12.
        assert_eq!(ds.records[1].matrix.get(1, 2), 24.0);
        assert_eq!(ds.labels, vec!["V1", "V2"]);
    }

    #[test]
    fn ragged_directory_is_rejected_with_subject_name() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.csv", "1,2\n3,4\n5,6\n7,8\n");
        write_file(dir.path(), "b.csv", "1,2,9\n3,4,9\n5,6,9\n7,8,9\n");
        let err = load_dataset(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(
            err.to_string().contains('b'),
            "error should name subject b: {err}"
        );
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "a.csv", "1,2\n3,oops\n");
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn long_csv_with_groups() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("subject_id,time_index,group,F1,F2,F3\n");
        for subject in ["u", "v"] {
            for t in 0..5 {
                body.push_str(&format!(
                    "{subject},{t},ctrl,{},{},{}\n",
                    t as f64,
                    t as f64 + 0.5,
                    t as f64 + 0.25
                ));
            }
        }
        write_file(dir.path(), "long.csv", &body);
        let ds = load_dataset(&dir.path().join("long.csv")).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.p(), 3);
        assert_eq!(ds.q(), 5);
        assert_eq!(ds.labels, vec!["F1", "F2", "F3"]);
        assert_eq!(ds.records[0].group.as_deref(), Some("ctrl"));
        assert_eq!(ds.records[0].matrix.get(1, 3), 3.5);
        assert_eq!(ds.filter_group("ctrl").records.len(), 2);
    }

    #[test]
    fn downsampling_means_and_window_validation() {
        let rec = SubjectRecord {
            id: "x".into(),
            matrix: Mat::from_fn(1, 4, |_, l| [1.0, 3.0, 5.0, 7.0][l]),
            group: None,
        };
        let identity = temporal_downsample(&rec, 1).unwrap();
        assert_eq!(identity.matrix.row(0), rec.matrix.row(0));
        let halved = temporal_downsample(&rec, 2).unwrap();
        assert_eq!(halved.matrix.row(0), &[2.0, 6.0]);
        assert!(temporal_downsample(&rec, 3).is_err());
    }

    #[test]
    fn downsampling_by_eight() {
        let rec = SubjectRecord {
            id: "big".into(),
            matrix: Mat::from_fn(3, 256, |i, l| (i * 256 + l) as f64),
            group: None,
        };
        let out = temporal_downsample(&rec, 8).unwrap();
        assert_eq!(out.matrix.cols(), 32);
        // First window of row 0: mean of 0..=7.
        assert_eq!(out.matrix.get(0, 0), 3.5);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "st.csv", "1.0,0.4\n0.4,1.0\n");
        let m = load_matrix_csv(&dir.path().join("st.csv")).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.get(0, 1), 0.4);
        write_file(dir.path(), "bad.csv", "1.0,0.4\n0.5,1.0\n");
        assert!(load_matrix_csv(&dir.path().join("bad.csv")).is_err());
    }
}
