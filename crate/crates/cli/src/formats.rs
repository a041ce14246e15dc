//! CSV layouts shared by the stages. Floats are written in Rust's shortest
//! round-trip form, so reading a file back gives the exact values.

use std::path::Path;

use roletrack_core::churn::{ChurnExample, ChurnLabel, Dataset};
use roletrack_core::dtm::RoleMixture;
use roletrack_core::evaluate::Metric;
use roletrack_core::ingest::ActivityRecord;

use crate::error::{CliError, Result};

pub fn csv_bytes<I, R>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn header(fixed: &[&str], prefix: &str, n: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|i| format!("{prefix}{i}")))
        .collect()
}

pub fn metric_cell(m: &Metric) -> String {
    match m.value() {
        Some(v) => v.to_string(),
        None => "undefined".into(),
    }
}

/// Parses CSV bytes into rows of strings, skipping the header.
pub fn read_rows(path: &Path, bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let head: Vec<String> = r
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::format(path, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((head, rows))
}

pub fn parse_cell<T: std::str::FromStr>(path: &Path, row: usize, cell: &str) -> Result<T> {
    cell.parse()
        .map_err(|_| CliError::format(path, format!("row {}: cannot parse {cell:?}", row + 1)))
}

pub fn records_csv(records: &[ActivityRecord], vocab_size: usize) -> Vec<u8> {
    csv_bytes(
        &header(&["user", "quarter"], "ns_", vocab_size),
        records.iter().map(|r| {
            [r.user.clone(), r.quarter.to_string()]
                .into_iter()
                .chain(r.counts.iter().map(u64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn read_records(path: &Path, bytes: &[u8]) -> Result<Vec<ActivityRecord>> {
    let (head, rows) = read_rows(path, bytes)?;
    let v = head.len().saturating_sub(2);
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let counts = row[2..]
                .iter()
                .map(|c| parse_cell(path, i, c))
                .collect::<Result<Vec<u64>>>()?;
            if counts.len() != v {
                return Err(CliError::format(path, format!("row {}: expected {v} counts", i + 1)));
            }
            Ok(ActivityRecord {
                user: row[0].clone(),
                quarter: parse_cell(path, i, &row[1])?,
                counts,
            })
        })
        .collect()
}

pub fn theta_csv(mixtures: &[RoleMixture], roles: usize) -> Vec<u8> {
    csv_bytes(
        &header(&["user", "quarter"], "theta_", roles),
        mixtures.iter().map(|m| {
            [m.user.clone(), m.quarter.to_string()]
                .into_iter()
                .chain(m.theta.iter().map(f64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn read_theta(path: &Path, bytes: &[u8]) -> Result<(usize, Vec<RoleMixture>)> {
    let (head, rows) = read_rows(path, bytes)?;
    let k = head.len().saturating_sub(2);
    let mixtures = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(RoleMixture {
                user: row[0].clone(),
                quarter: parse_cell(path, i, &row[1])?,
                theta: row[2..].iter().map(|c| parse_cell(path, i, c)).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((k, mixtures))
}

/// `(fixed columns, matrix rows)` with float cells.
pub fn read_matrix(path: &Path, bytes: &[u8], fixed: usize) -> Result<Vec<(Vec<String>, Vec<f64>)>> {
    let (_, rows) = read_rows(path, bytes)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let vals = row[fixed..]
                .iter()
                .map(|c| parse_cell(path, i, c))
                .collect::<Result<_>>()?;
            Ok((row[..fixed].to_vec(), vals))
        })
        .collect()
}

pub fn label_name(l: ChurnLabel) -> &'static str {
    match l {
        ChurnLabel::Departed => "departed",
        ChurnLabel::Staying => "staying",
    }
}

pub fn dataset_csv(ds: &Dataset) -> Vec<u8> {
    csv_bytes(
        &header(&["user", "window", "label"], "f_", ds.feature_names.len()),
        ds.examples.iter().map(|e| {
            [e.user.clone(), e.window.to_string(), label_name(e.label).to_string()]
                .into_iter()
                .chain(e.features.iter().map(f64::to_string))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn read_dataset(path: &Path, bytes: &[u8], roles: usize, feature_names: Vec<String>) -> Result<Dataset> {
    let (head, rows) = read_rows(path, bytes)?;
    let p = head.len().saturating_sub(3);
    if p != feature_names.len() {
        return Err(CliError::format(
            path,
            format!("{p} feature columns but the sidecar names {}", feature_names.len()),
        ));
    }
    let examples = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let label = match row[2].as_str() {
                "departed" => ChurnLabel::Departed,
                "staying" => ChurnLabel::Staying,
                other => {
                    return Err(CliError::format(
                        path,
                        format!("row {}: unknown label {other:?}", i + 1),
                    ))
                }
            };
            Ok(ChurnExample {
                user: row[0].clone(),
                window: parse_cell(path, i, &row[1])?,
                features: row[3..].iter().map(|c| parse_cell(path, i, c)).collect::<Result<_>>()?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        roles,
        feature_names,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let recs = vec![
            ActivityRecord {
                user: "a,b".into(),
                quarter: 3,
                counts: vec![650, 233, 0],
            },
            ActivityRecord {
                user: "c".into(),
                quarter: 0,
                counts: vec![0, 0, 1],
            },
        ];
        let bytes = records_csv(&recs, 3);
        assert!(bytes.starts_with(b"user,quarter,ns_0,ns_1,ns_2\n"));
        assert_eq!(read_records(Path::new("r.csv"), &bytes).unwrap(), recs);
    }

    #[test]
    fn theta_round_trip_is_exact() {
        let m = vec![RoleMixture {
            user: "u".into(),
            quarter: 1,
            theta: vec![0.1 + 0.2, 1.0 / 3.0, 1e-300],
        }];
        let (k, back) = read_theta(Path::new("t.csv"), &theta_csv(&m, 3)).unwrap();
        assert_eq!(k, 3);
        assert_eq!(back, m);
    }

    #[test]
    fn bad_cells_name_the_row() {
        let err = read_records(Path::new("r.csv"), b"user,quarter,ns_0\na,x,1\n").unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }
}
