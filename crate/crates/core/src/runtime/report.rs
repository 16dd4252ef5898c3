//! Deterministic CSV and text renderings of evaluation results.

use std::fmt::Write;

use super::{CostLedger, EvalReport, Evaluation};
use crate::error::{Error, Result};

/// Two-decimal signed rendering that never prints `-0.00`.
fn signed(x: f64) -> String {
    let s = format!("{x:+.2}");
    if s == "-0.00" {
        "+0.00".to_string()
    } else {
        s
    }
}

/// `mode,superclass,accuracy_pct,n_test` rows per superclass followed by a
/// summary block (macro average, micro average, stage-1 routing accuracy).
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("mode,superclass,accuracy_pct,n_test\n");
    let mode = report.mode.label();
    for ((name, acc), n) in report
        .superclass_names
        .iter()
        .zip(&report.per_superclass)
        .zip(&report.per_superclass_n)
    {
        writeln!(out, "{mode},{name},{acc:.2},{n}").unwrap();
    }
    for (label, value) in [
        ("macro_average", report.macro_accuracy),
        ("micro_average", report.micro_accuracy),
        ("superclass_routing", report.superclass_accuracy),
    ] {
        writeln!(out, "{mode},{label},{value:.2},{}", report.n_test).unwrap();
    }
    out
}

/// Superclass confusion counts as a `true\pred` grid.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("true\\pred");
    for name in &report.superclass_names {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for (name, row) in report.superclass_names.iter().zip(&report.confusion) {
        out.push_str(name);
        for c in row {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Row-normalized confusion matrix in percent, as an aligned text table.
pub fn confusion_percent_text(counts: &[Vec<u64>], names: &[String]) -> Result<String> {
    if counts.len() != names.len() || counts.iter().any(|r| r.len() != names.len()) {
        return Err(Error::Dimension {
            left: vec![counts.len()],
            right: vec![names.len()],
        });
    }
    let width = names.iter().map(String::len).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}", "true\\pred");
    for name in names {
        write!(out, " {name:>width$}").unwrap();
    }
    out.push('\n');
    for (name, row) in names.iter().zip(counts) {
        let total: u64 = row.iter().sum();
        write!(out, "{name:<width$}").unwrap();
        for &c in row {
            let pct = if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            };
            write!(out, " {:>width$}", format!("{pct:.2}")).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn ledger_csv(ledger: &CostLedger) -> String {
    format!(
        "bytes_loaded,peak_resident_bytes,reconstruction_adds,specialist_switches\n{},{},{},{}\n",
        ledger.bytes_loaded, ledger.peak_resident_bytes, ledger.reconstruction_adds, ledger.specialist_switches
    )
}

/// `row,superclass,subclass` per test row.
pub fn predictions_csv(eval: &Evaluation) -> String {
    let mut out = String::from("row,superclass,subclass\n");
    for (r, (s, sub)) in eval.predictions.iter().enumerate() {
        writeln!(out, "{r},{s},{sub}").unwrap();
    }
    out
}

/// One line of a gap report: a mode label and its average accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub label: String,
    pub accuracy: f64,
    pub n_test: usize,
}

impl From<&EvalReport> for GapRow {
    fn from(r: &EvalReport) -> Self {
        GapRow {
            label: r.mode.label().to_string(),
            accuracy: r.macro_accuracy,
            n_test: r.n_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapReport {
    pub text: String,
    pub csv: String,
}

struct Delta {
    abs: f64,
    rel: f64,
}

fn delta(a: f64, reference: f64) -> Delta {
    Delta {
        abs: a - reference,
        rel: 100.0 * (a - reference) / reference,
    }
}

/// Average accuracy per mode with absolute (points) and relative (percent)
/// differences against the rows labelled `lowerbound` and `upperbound`.
pub fn gap_report(rows: &[GapRow]) -> Result<GapReport> {
    let first = rows
        .first()
        .ok_or_else(|| Error::contract("gap report needs at least one row"))?;
    if let Some(r) = rows.iter().find(|r| r.n_test != first.n_test) {
        return Err(Error::contract(format!(
            "{} was evaluated on {} rows, {} on {}",
            r.label, r.n_test, first.label, first.n_test
        )));
    }
    let find = |label: &str| rows.iter().find(|r| r.label == label).map(|r| r.accuracy);
    let (lower, upper) = (find("lowerbound"), find("upperbound"));
    let versus = |r: &GapRow, reference: Option<f64>, label: &str| {
        reference.filter(|_| r.label != label).map(|v| delta(r.accuracy, v))
    };

    let mut csv = String::from(
        "mode,accuracy_pct,vs_lowerbound_abs,vs_lowerbound_rel_pct,vs_upperbound_abs,vs_upperbound_rel_pct\n",
    );
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(4);
    let mut text = format!(
        "{:<width$}  {:>8}  {:>14}  {:>14}\n",
        "mode", "accuracy", "vs lowerbound", "vs upperbound"
    );
    let mut lines = String::new();
    for r in rows {
        let lo = versus(r, lower, "lowerbound");
        let up = versus(r, upper, "upperbound");
        let cells = |d: &Option<Delta>| match d {
            Some(d) => (signed(d.abs), signed(d.rel)),
            None => (String::new(), String::new()),
        };
        let ((lo_abs, lo_rel), (up_abs, up_rel)) = (cells(&lo), cells(&up));
        writeln!(csv, "{},{:.2},{lo_abs},{lo_rel},{up_abs},{up_rel}", r.label, r.accuracy).unwrap();
        let pair = |a: &str, b: &str| {
            if a.is_empty() {
                String::new()
            } else {
                format!("{a} ({b}%)")
            }
        };
        writeln!(
            text,
            "{:<width$}  {:>8.2}  {:>14}  {:>14}",
            r.label,
            r.accuracy,
            pair(&lo_abs, &lo_rel),
            pair(&up_abs, &up_rel)
        )
        .unwrap();
        if let Some(d) = lo {
            writeln!(
                lines,
                "{} - lowerbound = {} ({}%)",
                r.label,
                signed(d.abs),
                signed(d.rel)
            )
            .unwrap();
        }
    }
    if !lines.is_empty() {
        text.push('\n');
        text.push_str(&lines);
    }
    Ok(GapReport { text, csv })
}

/// Compression of one specialist's delta.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionRow {
    pub superclass: String,
    pub mode: String,
    /// What the ratio divides by, e.g. `f32` or `int8` model bytes.
    pub reference: String,
    pub packed_bytes: usize,
    pub reference_bytes: usize,
    pub ratio: f64,
}

/// Per-superclass ratios followed by one `average` line per (mode,
/// reference) pair holding the mean of its per-superclass ratios. Pairs
/// appear in first-appearance order.
pub fn compression_csv(rows: &[CompressionRow]) -> String {
    let mut out = String::from("superclass,mode,reference,packed_bytes,reference_bytes,ratio\n");
    let mut groups: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.4}",
            r.superclass, r.mode, r.reference, r.packed_bytes, r.reference_bytes, r.ratio
        )
        .unwrap();
        let key = (r.mode.as_str(), r.reference.as_str());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (mode, reference) in groups {
        let ratios: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == mode && r.reference == reference)
            .map(|r| r.ratio)
            .collect();
        writeln!(
            out,
            "average,{mode},{reference},,,{:.4}",
            ratios.iter().sum::<f64>() / ratios.len() as f64
        )
        .unwrap();
    }
    out
}
