//! CSV tables.
//!
//! Floats are written as `{:.16e}` (17 significant digits, decimal point,
//! round-trips exactly), lines end in LF, and rows keep the order of the
//! underlying records so identical inputs give identical bytes.

use std::path::{Path, PathBuf};

use qsise_core::sim::{MonteCarloTable, RunRecord, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("refusing to write an empty table to {0}")]
    EmptyTable(PathBuf),
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), OutputError> {
    if table.header.is_empty() || table.rows.is_empty() {
        return Err(OutputError::EmptyTable(path.to_path_buf()));
    }
    let err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(err)?;
    w.write_record(&table.header).map_err(err)?;
    for row in &table.rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-step truth and estimates of one run.
///
/// Row `t` holds `x[t]`, `d[t]` and each estimator's `x̂[t]`, its estimate of
/// `d[t]` (available one step later, so empty in the last row) and the mixture
/// size after step `t`.
pub fn filter_table(traj: &Trajectory, records: &[RunRecord]) -> Table {
    let n = traj.x[0].len();
    let m = traj.d[0].len();
    let names = qsise_core::sim::signal_names(n, m);
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    for rec in records {
        header.extend(names.iter().map(|s| format!("{}_{s}", rec.estimator)));
        header.push(format!("{}_M", rec.estimator));
    }
    let rows = (0..traj.len())
        .map(|t| {
            let mut row = vec![(t + 1).to_string()];
            row.extend(traj.x[t].iter().map(|v| format_float(*v)));
            row.extend(traj.d[t].iter().map(|v| format_float(*v)));
            for rec in records {
                row.extend(rec.x_hat[t].iter().map(|v| format_float(*v)));
                match rec.d_hat.get(t) {
                    Some(d) => row.extend(d.iter().map(|v| format_float(*v))),
                    None => row.extend(std::iter::repeat_n(String::new(), m)),
                }
                row.push(rec.components[t].to_string());
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// One row per (estimator, step size, realization).
pub fn mse_table(table: &MonteCarloTable) -> Table {
    let mut header: Vec<String> = ["estimator", "delta", "seed"].map(String::from).to_vec();
    header.extend(table.signal_names().iter().map(|s| format!("mse_{s}")));
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.estimator.to_string(),
                format_float(r.delta),
                r.seed.to_string(),
            ];
            row.extend(r.mse_x.iter().chain(&r.mse_d).map(|v| format_float(*v)));
            row
        })
        .collect();
    Table { header, rows }
}

/// Box-plot statistics per (estimator, step size, signal).
pub fn summary_table(table: &MonteCarloTable) -> Table {
    let header = [
        "estimator",
        "delta",
        "signal",
        "runs",
        "min",
        "q25",
        "median",
        "q75",
        "max",
    ]
    .map(String::from)
    .to_vec();
    let rows = table
        .summary
        .iter()
        .map(|c| {
            let runs = table
                .rows
                .iter()
                .filter(|r| r.estimator == c.estimator && r.delta == c.delta)
                .count();
            let s = &c.stats;
            vec![
                c.estimator.to_string(),
                format_float(c.delta),
                c.signal.clone(),
                runs.to_string(),
                format_float(s.min),
                format_float(s.q25),
                format_float(s.median),
                format_float(s.q75),
                format_float(s.max),
            ]
        })
        .collect();
    Table { header, rows }
}
