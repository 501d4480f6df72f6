//! Plain-text trial reports.
//!
//! `tables_string` renders one tab-separated section per group with one row
//! per week. `summary_string` renders `key = value` lines, one metric each,
//! which `parse_summary` reads back. `series_strings` renders the plot-ready
//! weekly series (week, then one column per group).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::trial::TrialReport;
use crate::error::{Error, Result};

pub fn tables_string(report: &TrialReport) -> String {
    let mut out = String::new();
    for g in &report.groups {
        let cmp = report.comparison(&g.name);
        let _ = writeln!(
            out,
            "# group {}\tpolicy={}\tsize={}\tbudget={}",
            g.name, g.policy, g.size, g.budget
        );
        out.push_str("week\tengaged\tdrop\tcumulative_drop\tactive");
        if cmp.is_some() {
            out.push_str("\tdrops_prevented");
        }
        out.push('\n');
        for t in 0..g.engaged.len() {
            let active = g.active_per_week.get(t).copied().unwrap_or(0);
            let _ = write!(
                out,
                "{t}\t{}\t{}\t{}\t{active}",
                g.engaged[t], g.drop[t], g.cumulative_drop[t]
            );
            if let Some(c) = cmp {
                let _ = write!(out, "\t{}", c.drops_prevented[t]);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn summary_string(report: &TrialReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "horizon = {}", report.horizon);
    let _ = writeln!(out, "intervention_weeks = {}", report.intervention_weeks);
    let _ = writeln!(out, "seed = {}", report.seed);
    for g in &report.groups {
        let p = format!("group.{}", g.name);
        let _ = writeln!(out, "{p}.size = {}", g.size);
        let _ = writeln!(out, "{p}.budget = {}", g.budget);
        let _ = writeln!(out, "{p}.cumulative_drop = {}", g.final_cumulative());
        let _ = writeln!(out, "{p}.engaged_final = {}", g.engaged.last().copied().unwrap_or(0));
    }
    for c in &report.comparisons {
        let p = format!("compare.{}", c.group);
        let _ = writeln!(out, "{p}.drops_prevented = {}", c.final_prevented());
        if let Some(r) = c.reduction {
            let _ = writeln!(out, "{p}.percent_reduction = {}", 100.0 * r);
        }
        let _ = writeln!(out, "{p}.p_value = {}", c.p_value);
        let _ = writeln!(out, "{p}.bootstrap_se = {}", c.bootstrap_se);
        let _ = writeln!(out, "{p}.beta_treatment_indicator = {}", c.beta);
        let _ = writeln!(out, "{p}.beta_treatment_indicator_se = {}", c.beta_se);
    }
    out
}

/// Weekly cumulative drop per group, and drops prevented per compared group.
pub fn series_strings(report: &TrialReport) -> (String, String) {
    let weeks = report.groups.first().map_or(0, |g| g.cumulative_drop.len());
    let mut cumulative = String::from("week");
    for g in &report.groups {
        let _ = write!(cumulative, "\t{}", g.name);
    }
    cumulative.push('\n');
    let mut prevented = String::from("week");
    for c in &report.comparisons {
        let _ = write!(prevented, "\t{}", c.group);
    }
    prevented.push('\n');
    for t in 0..weeks {
        let _ = write!(cumulative, "{t}");
        for g in &report.groups {
            let _ = write!(cumulative, "\t{}", g.cumulative_drop[t]);
        }
        cumulative.push('\n');
        let _ = write!(prevented, "{t}");
        for c in &report.comparisons {
            let _ = write!(prevented, "\t{}", c.drops_prevented[t]);
        }
        prevented.push('\n');
    }
    (cumulative, prevented)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.tsv`, `summary.txt`, `cumulative_drop.tsv` and
/// `drops_prevented.tsv` into `dir`, returning the paths written.
pub fn write_report(report: &TrialReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (cumulative, prevented) = series_strings(report);
    let files = [
        ("report.tsv", tables_string(report)),
        ("summary.txt", summary_string(report)),
        ("cumulative_drop.tsv", cumulative),
        ("drops_prevented.tsv", prevented),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        write(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

pub fn parse_summary(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let violation = |message: String| Error::SchemaViolation {
            file: "summary".into(),
            row: row + 1,
            column: String::new(),
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| violation(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| violation(format!("`{key}` is not a number")))?;
        out.insert(key.to_string(), value);
    }
    Ok(out)
}

pub fn read_summary(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_summary(&text).map_err(|e| match e {
        Error::SchemaViolation { row, column, message, .. } => Error::SchemaViolation {
            file: path.display().to_string(),
            row,
            column,
            message,
        },
        other => other,
    })
}
