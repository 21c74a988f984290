//! Diagnostics time series as CSV.

use crate::diagnostics::DiagnosticsRecord;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const COLUMNS: [&str; 13] = [
    "t",
    "energy",
    "dissipation",
    "mass_rho",
    "mass_b",
    "ratio_min",
    "ratio_max",
    "F_convex",
    "G_entropy",
    "delta_pressure_L1",
    "u_H1_sq",
    "rho_Lgamma",
    "b_L2_sq",
];

#[derive(Debug, Error)]
pub enum CsvIoError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Content { path: PathBuf, message: String },
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_timeseries_csv(series: &[DiagnosticsRecord], path: impl AsRef<Path>) -> Result<(), CsvIoError> {
    let path = path.as_ref();
    let wrap = |source| CsvIoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    w.write_record(COLUMNS).map_err(wrap)?;
    for r in series {
        w.write_record(r.values().iter().map(|v| format_value(*v)))
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))?;
    Ok(())
}

pub fn read_timeseries_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>, CsvIoError> {
    let path = path.as_ref();
    let wrap = |source| CsvIoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let content = |message: String| CsvIoError::Content {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    let header = r.headers().map_err(wrap)?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(content(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(wrap)?;
        let mut vals = [0.0; 13];
        for (k, field) in rec.iter().enumerate() {
            vals[k] = field.parse().map_err(|_| {
                content(format!(
                    "row {}: column {} is not a number: {field:?}",
                    row + 1,
                    COLUMNS[k]
                ))
            })?;
        }
        out.push(DiagnosticsRecord::from_values(vals));
    }
    Ok(out)
}
