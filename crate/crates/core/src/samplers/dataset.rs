use std::path::{Path, PathBuf};

use crate::io::atomic_write;
use crate::{Error, Result};

/// Real-valued inputs, one row per sample, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::InvalidDimension("dataset needs at least one non-empty row".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        Ok(Self { d, rows })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }
}

/// Per-(sample, feature) interesting flags recorded at generation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    rows: Vec<Vec<bool>>,
}

impl Labels {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }
}

/// `data.csv` -> `data.labels.csv`.
pub fn labels_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.labels.csv"))
}

fn header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

/// Writes `f0..f{d-1}` rows and, when given, the sibling `.labels.csv` of 0/1
/// flags with the same shape.
pub fn write_dataset(path: &Path, data: &Dataset, labels: Option<&Labels>) -> Result<()> {
    if let Some(labels) = labels {
        if labels.rows.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                actual: labels.rows.len(),
            });
        }
    }
    atomic_write(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header(data.d))?;
        for row in &data.rows {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    })?;
    if let Some(labels) = labels {
        atomic_write(&labels_path(path), |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header(data.d))?;
            for row in &labels.rows {
                out.write_record(row.iter().map(|&f| if f { "1" } else { "0" }))?;
            }
            out.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn read_matrix<T>(path: &Path, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<Vec<T>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let width = reader.headers()?.len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows (the header is row 0).
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedCsv {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::MalformedCsv {
                path: path.to_path_buf(),
                row,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|field| {
                parse(field.trim()).ok_or_else(|| Error::MalformedCsv {
                    path: path.to_path_buf(),
                    row,
                    message: format!("cannot parse {field:?}"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let rows = read_matrix(path, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))?;
    Dataset::new(rows)
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    let rows = read_matrix(path, |s| match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    })?;
    Labels::new(rows)
}
