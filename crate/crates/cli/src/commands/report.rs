use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rmab_core::sim::parse_summary;
use serde::{Deserialize, Serialize};

use super::{guard_outputs, Record};
use crate::config::absolute;
use crate::error::{CliError, CliResult};

pub const OUTPUT: &str = "report.md";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub report: ReportSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// `summary.txt` written by `trial`.
    pub summary: PathBuf,
}

/// Names between `prefix` and `suffix` in key order of first appearance.
fn names(text: &str, prefix: &str, suffix: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim()))
        .filter_map(|k| k.strip_prefix(prefix)?.strip_suffix(suffix))
        .map(String::from)
        .collect()
}

pub fn render(text: &str) -> CliResult<String> {
    let values = parse_summary(text)?;
    let get = |key: String| {
        values
            .get(&key)
            .copied()
            .ok_or_else(|| CliError::config("report.summary", format!("summary has no `{key}`")))
    };
    let mut md = String::from("# Trial report\n\n");
    let _ = writeln!(
        md,
        "Horizon {} weeks, calls in the first {}, seed {}.\n",
        get("horizon".into())?,
        get("intervention_weeks".into())?,
        get("seed".into())?
    );
    md.push_str("| group | size | budget | cumulative drop | engaged at end |\n");
    md.push_str("| --- | ---: | ---: | ---: | ---: |\n");
    for g in names(text, "group.", ".size") {
        let v = |m: &str| get(format!("group.{g}.{m}"));
        let _ = writeln!(
            md,
            "| {g} | {} | {} | {} | {} |",
            v("size")?,
            v("budget")?,
            v("cumulative_drop")?,
            v("engaged_final")?
        );
    }
    let compared = names(text, "compare.", ".drops_prevented");
    if !compared.is_empty() {
        md.push_str("\n| group vs control | drops prevented | reduction | p-value | treatment coefficient (se) |\n");
        md.push_str("| --- | ---: | ---: | ---: | ---: |\n");
        for c in compared {
            let v = |m: &str| get(format!("compare.{c}.{m}"));
            let reduction = values
                .get(&format!("compare.{c}.percent_reduction"))
                .map_or_else(|| "n/a".to_string(), |r| format!("{r:.1}%"));
            let _ = writeln!(
                md,
                "| {c} | {} | {reduction} | {:.4} | {:.4} ({:.4}) |",
                v("drops_prevented")?,
                v("p_value")?,
                v("beta_treatment_indicator")?,
                v("beta_treatment_indicator_se")?
            );
        }
    }
    Ok(md)
}

pub fn run(config: &mut ReportFile, out: &Path) -> CliResult<Record> {
    let summary = absolute(&config.report.summary)?;
    config.report.summary = summary.clone();
    guard_outputs(out, &[OUTPUT], std::slice::from_ref(&summary))?;
    let text = std::fs::read_to_string(&summary).map_err(|e| CliError::io(&summary, e))?;
    let md = render(&text)?;
    let path = out.join(OUTPUT);
    std::fs::write(&path, &md).map_err(|e| CliError::io(&path, e))?;
    print!("{md}");
    Ok(Record {
        inputs: vec![summary],
        outputs: vec![OUTPUT.to_string()],
        seed: None,
    })
}
