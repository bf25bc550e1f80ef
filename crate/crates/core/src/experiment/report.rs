//! CSV metrics files and plain-text summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "strategy,workload,nodes,input_bytes,seed,metric,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub workload: String,
    pub nodes: usize,
    pub input_bytes: u64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

impl MetricsRow {
    fn key(&self) -> (&str, &str, usize, u64, u64, &str) {
        (
            &self.strategy,
            &self.workload,
            self.nodes,
            self.input_bytes,
            self.seed,
            &self.metric,
        )
    }
}

/// Sorts rows by every key field so output order never depends on run order.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| a.key().cmp(&b.key()).then(a.value.total_cmp(&b.value)));
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.strategy, r.workload, r.nodes, r.input_bytes, r.seed, r.metric, r.value
        );
    }
    out
}

pub fn parse_rows(text: &str, origin: &Path) -> Result<Vec<MetricsRow>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(err(1, "missing metrics header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(i + 1, "expected 7 fields"));
        }
        rows.push(MetricsRow {
            strategy: f[0].to_string(),
            workload: f[1].to_string(),
            nodes: f[2].parse().map_err(|_| err(i + 1, "bad node count"))?,
            input_bytes: f[3].parse().map_err(|_| err(i + 1, "bad input size"))?,
            seed: f[4].parse().map_err(|_| err(i + 1, "bad seed"))?,
            metric: f[5].to_string(),
            value: f[6].parse().map_err(|_| err(i + 1, "bad value"))?,
        });
    }
    Ok(rows)
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_rows(&fs::read_to_string(path)?, path)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One line per (strategy, workload, nodes, input, metric) cell with the mean
/// and standard deviation over seeds.
pub fn summary_table(rows: &[MetricsRow]) -> String {
    let mut cells: BTreeMap<(&str, &str, usize, u64, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((&r.metric, &r.workload, r.nodes, r.input_bytes, &r.strategy))
            .or_default()
            .push(r.value);
    }
    let mut out = format!(
        "{:<18} {:<10} {:>5} {:>12} {:<8} {:>4} {:>14} {:>12}\n",
        "metric", "workload", "nodes", "input_bytes", "strategy", "n", "mean", "stddev"
    );
    for ((metric, workload, nodes, input, strategy), values) in cells {
        let (m, s) = mean_std(&values);
        let _ = writeln!(
            out,
            "{metric:<18} {workload:<10} {nodes:>5} {input:>12} {strategy:<8} {:>4} {m:>14.6} {s:>12.6}",
            values.len()
        );
    }
    out
}

/// Writes `metrics.csv` and `summary.txt` into `dir`.
pub fn emit_report(rows: &[MetricsRow], dir: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Empty("metrics rows"));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.csv"), rows_to_csv(rows))?;
    fs::write(dir.join("summary.txt"), summary_table(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, seed: u64, value: f64) -> MetricsRow {
        MetricsRow {
            strategy: strategy.into(),
            workload: "sort".into(),
            nodes: 4,
            input_bytes: 1 << 30,
            seed,
            metric: "makespan_s".into(),
            value,
        }
    }

    #[test]
    fn single_row_csv() {
        let csv = rows_to_csv(&[row("late", 1, 42.5)]);
        assert_eq!(
            csv,
            "strategy,workload,nodes,input_bytes,seed,metric,value\nlate,sort,4,1073741824,1,makespan_s,42.5\n"
        );
    }

    #[test]
    fn order_independent_and_round_trips() {
        let rows = vec![row("nn", 2, 0.1 + 0.2), row("late", 1, 1e-17), row("late", 0, 3.0)];
        let mut reversed = rows.clone();
        reversed.reverse();
        let csv = rows_to_csv(&rows);
        assert_eq!(csv, rows_to_csv(&reversed));
        let parsed = parse_rows(&csv, Path::new("m.csv")).unwrap();
        assert_eq!(rows_to_csv(&parsed), csv);
        assert_eq!(parsed[2].value, 0.1 + 0.2);
        assert!(parse_rows("a,b\n", Path::new("m.csv")).is_err());
    }

    #[test]
    fn summary_mean_and_std() {
        assert_eq!(mean_std(&[10.0, 20.0]).0, 15.0);
        assert!((mean_std(&[10.0, 20.0]).1 - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let table = summary_table(&[row("late", 0, 10.0), row("late", 1, 20.0)]);
        assert!(table.lines().nth(1).unwrap().contains("15.000000"));
    }

    #[test]
    fn empty_report_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], dir.path()).is_err());
        emit_report(&[row("late", 0, 1.0)], dir.path()).unwrap();
        assert!(dir.path().join("summary.txt").exists());
    }
}
