//! CSV sinks. Every file is UTF-8 with LF line endings and floats printed
//! with 10 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agent::QTable;
use crate::experiment::{fmt_sig, AggregateRow, ExperimentConfig, MetricRow, MetricsTable, PSnapshot, QSnapshot};

pub const RAW_HEADER: [&str; 8] = ["seed", "round", "step", "agent", "group", "scheme", "scenario", "g"];
pub const AGGREGATE_HEADER: [&str; 6] = ["round", "step", "scheme", "scenario", "mean_g", "ci95"];
pub const P_TRACE_HEADER: [&str; 4] = ["step", "i", "j", "p"];
pub const Q_TRACE_HEADER: [&str; 6] = ["step", "agent", "group", "state", "action", "q"];
pub const ORACLE_HEADER: [&str; 4] = ["group", "state", "action", "q"];
pub const SUMMARY_HEADER: [&str; 8] =
    ["scheme", "scenario", "round", "step", "mean_g", "ci95", "mean_g_undiscounted", "ci95_undiscounted"];

pub const RAW_FILE: &str = "raw.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RAW_UNDISCOUNTED_FILE: &str = "raw_undiscounted.csv";
pub const AGGREGATE_UNDISCOUNTED_FILE: &str = "aggregate_undiscounted.csv";
pub const P_TRACE_FILE: &str = "p_trace.csv";
pub const Q_TRACE_FILE: &str = "q_trace.csv";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, record {record}: {msg}")]
    Malformed { path: PathBuf, record: usize, msg: String },
    #[error("nothing to write: {0}")]
    Empty(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv { path: path.to_path_buf(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `header` and `records` to `path`.
pub fn write_csv<I, R>(path: &Path, header: &[&str], records: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for r in records {
        w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn raw_records<'a>(
    table: &'a MetricsTable,
    value: impl Fn(&MetricRow) -> f64 + 'a,
) -> impl Iterator<Item = Vec<String>> + 'a {
    let mut rows: Vec<&MetricRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| (r.seed, r.round, r.agent));
    rows.into_iter().map(move |r| {
        vec![
            r.seed.to_string(),
            r.round.to_string(),
            r.step.to_string(),
            r.agent.to_string(),
            r.group.to_string(),
            table.scheme.to_string(),
            table.scenario.to_string(),
            fmt_sig(value(r)),
        ]
    })
}

fn aggregate_records<'a>(table: &'a MetricsTable, rows: &'a [AggregateRow]) -> impl Iterator<Item = Vec<String>> + 'a {
    rows.iter().map(move |a| {
        vec![
            a.round.to_string(),
            a.step.to_string(),
            table.scheme.to_string(),
            table.scenario.to_string(),
            fmt_sig(a.mean),
            fmt_sig(a.ci95),
        ]
    })
}

/// Writes `raw.csv` and `aggregate.csv` for the discounted score and the
/// `_undiscounted` variants alongside.
pub fn emit_metrics(table: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    if table.rows.is_empty() {
        return Err(OutputError::Empty("metrics table has no rows"));
    }
    ensure_dir(dir)?;
    let files = [RAW_FILE, AGGREGATE_FILE, RAW_UNDISCOUNTED_FILE, AGGREGATE_UNDISCOUNTED_FILE].map(|f| dir.join(f));
    write_csv(&files[0], &RAW_HEADER, raw_records(table, |r| r.g))?;
    write_csv(&files[1], &AGGREGATE_HEADER, aggregate_records(table, &table.aggregates))?;
    write_csv(&files[2], &RAW_HEADER, raw_records(table, |r| r.g_undiscounted))?;
    write_csv(&files[3], &AGGREGATE_HEADER, aggregate_records(table, &table.aggregates_undiscounted))?;
    Ok(files.to_vec())
}

/// Writes `p_trace.csv`: one row per matrix entry per captured round.
pub fn emit_p_matrix_trace(snapshots: &[PSnapshot], dir: &Path) -> Result<PathBuf, OutputError> {
    ensure_dir(dir)?;
    let path = dir.join(P_TRACE_FILE);
    let records = snapshots.iter().flat_map(|s| {
        (0..s.n).flat_map(move |i| {
            (0..s.n).map(move |j| vec![s.step.to_string(), i.to_string(), j.to_string(), fmt_sig(s.get(i, j))])
        })
    });
    write_csv(&path, &P_TRACE_HEADER, records)?;
    Ok(path)
}

/// Writes `q_trace.csv`: every agent's table after every round.
pub fn emit_q_trace(snapshots: &[QSnapshot], cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, OutputError> {
    ensure_dir(dir)?;
    let path = dir.join(Q_TRACE_FILE);
    let f = cfg.assignment();
    let n_actions = cfg.groups.first().and_then(|g| g.env.shape().ok()).map_or(1, |(_, a)| a);
    let records = snapshots.iter().flat_map(|s| {
        let f = &f;
        s.tables.iter().enumerate().flat_map(move |(agent, t)| {
            t.iter().enumerate().map(move |(k, q)| {
                vec![
                    s.step.to_string(),
                    agent.to_string(),
                    f.group_of(agent).to_string(),
                    (k / n_actions).to_string(),
                    (k % n_actions).to_string(),
                    fmt_sig(*q),
                ]
            })
        })
    });
    write_csv(&path, &Q_TRACE_HEADER, records)?;
    Ok(path)
}

/// Writes optimal tables, one block per group.
pub fn emit_oracle(tables: &[QTable<f64>], path: &Path) -> Result<(), OutputError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let records = tables.iter().enumerate().flat_map(|(g, q)| {
        (0..q.n_states()).flat_map(move |s| {
            (0..q.n_actions()).map(move |a| vec![g.to_string(), s.to_string(), a.to_string(), fmt_sig(q.get(s, a))])
        })
    });
    write_csv(path, &ORACLE_HEADER, records)
}

/// Writes one final-round line per table.
pub fn emit_summary(tables: &[MetricsTable], dir: &Path) -> Result<PathBuf, OutputError> {
    ensure_dir(dir)?;
    let path = dir.join(SUMMARY_FILE);
    let records = tables.iter().filter_map(|t| {
        let (d, u) = (t.final_aggregate()?, t.final_aggregate_undiscounted()?);
        Some(vec![
            t.scheme.to_string(),
            t.scenario.to_string(),
            d.round.to_string(),
            d.step.to_string(),
            fmt_sig(d.mean),
            fmt_sig(d.ci95),
            fmt_sig(u.mean),
            fmt_sig(u.ci95),
        ])
    });
    write_csv(&path, &SUMMARY_HEADER, records)?;
    Ok(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

fn read_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, OutputError> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(csv_err(path))?;
    let found = r.headers().map_err(csv_err(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            record: 0,
            msg: format!("unexpected header {found:?}"),
        });
    }
    r.records().collect::<Result<Vec<_>, _>>().map_err(csv_err(path))
}

fn field<V: std::str::FromStr>(
    path: &Path,
    record: usize,
    rec: &csv::StringRecord,
    idx: usize,
) -> Result<V, OutputError> {
    rec.get(idx).and_then(|v| v.parse().ok()).ok_or_else(|| OutputError::Malformed {
        path: path.to_path_buf(),
        record,
        msg: format!("bad field {idx}: {:?}", rec.get(idx)),
    })
}

/// Reads a `raw.csv` back; the score lands in both `g` fields.
pub fn read_raw_csv(path: &Path) -> Result<Vec<MetricRow>, OutputError> {
    read_records(path, &RAW_HEADER)?
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let g: f64 = field(path, k + 1, rec, 7)?;
            Ok(MetricRow {
                seed: field(path, k + 1, rec, 0)?,
                round: field(path, k + 1, rec, 1)?,
                step: field(path, k + 1, rec, 2)?,
                agent: field(path, k + 1, rec, 3)?,
                group: field(path, k + 1, rec, 4)?,
                g,
                g_undiscounted: g,
            })
        })
        .collect()
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>, OutputError> {
    read_records(path, &AGGREGATE_HEADER)?
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            Ok(AggregateRow {
                round: field(path, k + 1, rec, 0)?,
                step: field(path, k + 1, rec, 1)?,
                mean: field(path, k + 1, rec, 4)?,
                ci95: field(path, k + 1, rec, 5)?,
            })
        })
        .collect()
}
