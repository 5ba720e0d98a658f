//! Versioned result CSVs: writing, parsing and text summaries.
//!
//! Every file starts with a `# ris-results <kind> v<version>` comment line.

use std::fmt::Write as _;

use crate::config::ExperimentKind;
use crate::experiment::{ConvergenceRow, Results, SeRow};

pub const SCHEMA_VERSION: u32 = 1;

pub fn schema_line(kind: &str) -> String {
    format!("# ris-results {kind} v{SCHEMA_VERSION}")
}

fn x_column(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::SeVsPower => "p_max_dbm",
        _ => "ris_elements",
    }
}

/// Per-seed scores are kept in one `;`-separated column so the file round-trips.
pub fn to_csv(results: &Results) -> String {
    let mut s = schema_line(results.kind().name());
    s.push('\n');
    match results {
        Results::Convergence(rows) => {
            s.push_str("algo,episode,mean,std\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{},{}", r.algo, r.episode, r.mean, r.std);
            }
        }
        Results::Se { kind, rows } => {
            let _ = writeln!(s, "{},method,mean,std,scores", x_column(*kind));
            for r in rows {
                let scores: Vec<String> = r.scores.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "{},{},{},{},{}", r.x, r.method, r.mean, r.std, scores.join(";"));
            }
        }
    }
    s
}

fn parse_kind(line: &str) -> Result<ExperimentKind, String> {
    let rest = line.strip_prefix("# ris-results ").ok_or("missing schema comment line")?;
    let (kind, version) = rest.split_once(' ').ok_or("malformed schema comment line")?;
    if version != format!("v{SCHEMA_VERSION}") {
        return Err(format!("unsupported schema version {version}"));
    }
    match kind {
        "convergence" => Ok(ExperimentKind::Convergence),
        "se_vs_power" => Ok(ExperimentKind::SeVsPower),
        "se_vs_ris" => Ok(ExperimentKind::SeVsRis),
        other => Err(format!("unknown result kind {other:?}")),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T, String> {
    let raw = rec.get(i).ok_or_else(|| format!("missing column {i}"))?;
    raw.parse().map_err(|_| format!("cannot parse {raw:?} in column {i}"))
}

pub fn parse_csv(text: &str) -> Result<Results, String> {
    let kind = parse_kind(text.lines().next().unwrap_or_default())?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match kind {
        ExperimentKind::Convergence => {
            let rows = records
                .iter()
                .map(|r| {
                    Ok(ConvergenceRow { algo: field(r, 0)?, episode: field(r, 1)?, mean: field(r, 2)?, std: field(r, 3)? })
                })
                .collect::<Result<_, String>>()?;
            Ok(Results::Convergence(rows))
        }
        kind => {
            let rows = records
                .iter()
                .map(|r| {
                    let scores = r
                        .get(4)
                        .unwrap_or_default()
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<f64>().map_err(|_| format!("bad score {s:?}")))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(SeRow { x: field(r, 0)?, method: field(r, 1)?, mean: field(r, 2)?, std: field(r, 3)?, scores })
                })
                .collect::<Result<_, String>>()?;
            Ok(Results::Se { kind, rows })
        }
    }
}

/// Human-readable table of a result set.
pub fn summary(results: &Results) -> String {
    let mut s = String::new();
    match results {
        Results::Convergence(rows) => {
            let mut algos: Vec<&str> = rows.iter().map(|r| r.algo.as_str()).collect();
            algos.dedup();
            let _ = writeln!(s, "{:<10} {:>8} {:>14} {:>14}", "algo", "episodes", "first reward", "last reward");
            for a in algos {
                let own: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.algo == a).collect();
                if let (Some(first), Some(last)) = (own.first(), own.last()) {
                    let _ = writeln!(s, "{a:<10} {:>8} {:>14.3} {:>14.3}", own.len(), first.mean, last.mean);
                }
            }
        }
        Results::Se { kind, rows } => {
            let _ = writeln!(s, "{:<12} {:<8} {:>10} {:>10}", x_column(*kind), "method", "mean SE", "std");
            for r in rows {
                let _ = writeln!(s, "{:<12} {:<8} {:>10.3} {:>10.3}", r.x, r.method, r.mean, r.std);
            }
        }
    }
    s
}

/// Plot series per algorithm or method: (name, points).
pub fn series(results: &Results) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut push = |name: &str, pt: (f64, f64)| match out.iter_mut().find(|(n, _)| n == name) {
        Some((_, pts)) => pts.push(pt),
        None => out.push((name.to_string(), vec![pt])),
    };
    match results {
        Results::Convergence(rows) => rows.iter().for_each(|r| push(&r.algo, (r.episode as f64, r.mean))),
        Results::Se { rows, .. } => rows.iter().for_each(|r| push(&r.method, (r.x, r.mean))),
    }
    out
}

/// (title, x label, y label) for a result kind.
pub fn labels(kind: ExperimentKind) -> (&'static str, &'static str, &'static str) {
    match kind {
        ExperimentKind::Convergence => ("Average cumulative reward", "episode", "reward"),
        ExperimentKind::SeVsPower => ("Sum SE vs BS transmit power", "P_max (dBm)", "sum SE (bits/s/Hz)"),
        ExperimentKind::SeVsRis => ("Sum SE vs RIS size", "RIS elements M", "sum SE (bits/s/Hz)"),
    }
}
