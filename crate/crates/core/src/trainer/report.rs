//! Aggregation of finished runs into mean ± std tables.
//!
//! A run directory holds `summary.txt` and `manifest.txt`, as written by the
//! `train` command. Runs are grouped by their configuration with the seed
//! removed, so repeated seeds of one setup land in one row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::mean_std;

/// Marks the start of the configuration block inside a manifest.
pub const CONFIG_SECTION: &str = "[config]";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config: BTreeMap<String, String>,
    pub values: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.values.get(key)?.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

fn key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn read_run(dir: &Path) -> Result<RunSummary> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let summary = read("summary.txt")?;
    let manifest = read("manifest.txt")?;
    let config_text = manifest
        .split_once(CONFIG_SECTION)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Format {
            path: dir.join("manifest.txt").display().to_string(),
            line: 0,
            message: format!("no {CONFIG_SECTION} section"),
        })?;
    Ok(RunSummary {
        dir: dir.into(),
        config: key_values(config_text),
        values: key_values(&summary),
    })
}

/// Every run directory directly under `root`, in name order.
pub fn collect_runs(root: &Path) -> Result<Vec<RunSummary>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("summary.txt").is_file() && p.join("manifest.txt").is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| read_run(d)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    /// Config entries that tell this group apart from the others.
    pub label: String,
    pub runs: usize,
    pub seeds: Vec<String>,
    /// (metric, mean, population std, runs with a value).
    pub stats: Vec<(String, f64, f64, usize)>,
}

pub const REPORT_METRICS: &[&str] = &["test_acc", "test_auc", "val_acc", "val_auc"];

pub fn aggregate(runs: &[RunSummary]) -> Vec<GroupRow> {
    let mut groups: Vec<(BTreeMap<String, String>, Vec<&RunSummary>)> = Vec::new();
    for run in runs {
        let mut key = run.config.clone();
        key.remove("seed");
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(run),
            None => groups.push((key, vec![run])),
        }
    }
    let varying: Vec<String> = match groups.first() {
        Some((first, _)) => first
            .keys()
            .filter(|k| groups.iter().any(|(g, _)| g.get(*k) != first.get(*k)))
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    groups
        .iter()
        .map(|(config, members)| {
            let label = if varying.is_empty() {
                config.get("model").cloned().unwrap_or_else(|| "all".into())
            } else {
                varying
                    .iter()
                    .map(|k| format!("{k}={}", config.get(k).map_or("-", String::as_str)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let stats = REPORT_METRICS
                .iter()
                .map(|m| {
                    let xs: Vec<f64> = members.iter().filter_map(|r| r.metric(m)).collect();
                    let (mean, std) = mean_std(&xs);
                    (m.to_string(), mean, std, xs.len())
                })
                .collect();
            GroupRow {
                label,
                runs: members.len(),
                seeds: members
                    .iter()
                    .map(|r| r.values.get("seed").cloned().unwrap_or_default())
                    .collect(),
                stats,
            }
        })
        .collect()
}

/// Human-readable table, one row per group.
pub fn render_table(rows: &[GroupRow]) -> String {
    let mut s = String::new();
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let _ = write!(s, "{:<width$}  runs", "group");
    for m in REPORT_METRICS {
        let _ = write!(s, "  {m:>17}");
    }
    s.push('\n');
    for row in rows {
        let _ = write!(s, "{:<width$}  {:>4}", row.label, row.runs);
        for (_, mean, std, n) in &row.stats {
            if *n == 0 {
                let _ = write!(s, "  {:>17}", "n/a");
            } else {
                let _ = write!(s, "  {:>17}", format!("{mean:.4} ± {std:.4}"));
            }
        }
        s.push('\n');
    }
    s
}

/// `group,runs,seeds,<metric>_mean,<metric>_std,...`
pub fn render_csv(rows: &[GroupRow]) -> String {
    let mut s = String::from("group,runs,seeds");
    for m in REPORT_METRICS {
        let _ = write!(s, ",{m}_mean,{m}_std");
    }
    s.push('\n');
    for row in rows {
        let _ = write!(s, "\"{}\",{},{}", row.label, row.runs, row.seeds.join(";"));
        for (_, mean, std, _) in &row.stats {
            let _ = write!(s, ",{mean},{std}");
        }
        s.push('\n');
    }
    s
}
