//! Per-action MPJPE tables and version-against-version comparisons.
//!
//! Table CSV layout: `version,<action>...,Average`, one row per table.
//! An empty cell means the action is absent from that row. Values are
//! written with shortest round-trip formatting; the text layout rounds to
//! one decimal with Rust's formatter, which rounds the exact binary value
//! and breaks exact ties to even (`0.25` → `0.2`, `53.94999` → `53.9`).
//!
//! Two summaries of a comparison are reported:
//! - mean relative improvement: the mean over actions of
//!   `(baseline − candidate) / baseline × 100`;
//! - average improvement: the same ratio applied to the two tables'
//!   averages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{poses3d_mm, ActionLabel, NormStats, PosePair};
use crate::error::{Error, Result};
use crate::metrics::{mpjpe, weighted_mpjpe, JointWeights};
use crate::model::Lifter;
use crate::nn::Layer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub label: String,
    /// MPJPE in millimeters, keyed (and ordered) by action.
    pub rows: BTreeMap<ActionLabel, f64>,
}

impl EvalTable {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            rows: BTreeMap::new(),
        }
    }

    pub fn with(mut self, action: ActionLabel, mm: f64) -> Self {
        self.rows.insert(action, mm);
        self
    }

    pub fn actions(&self) -> Vec<ActionLabel> {
        self.rows.keys().copied().collect()
    }

    /// Arithmetic mean of the rows; `NaN` for an empty table.
    pub fn average(&self) -> f64 {
        self.rows.values().sum::<f64>() / self.rows.len() as f64
    }
}

/// Per-action tables for `model` on `data`. With `weights`, a second table
/// of weighted MPJPE is returned, labelled `<label>-weighted`.
pub fn evaluate(
    model: &Lifter,
    data: &[PosePair],
    stats: &NormStats,
    weights: Option<&JointWeights>,
    label: &str,
) -> Result<(EvalTable, Option<EvalTable>)> {
    if data.is_empty() {
        return Err(Error::Table("no samples to evaluate".into()));
    }
    let mut groups: BTreeMap<ActionLabel, Vec<PosePair>> = BTreeMap::new();
    for p in data {
        groups.entry(p.action).or_default().push(p.clone());
    }
    for a in ActionLabel::ALL {
        if !groups.contains_key(&a) {
            log::warn!("action {a} has no samples; omitted from table");
        }
    }
    let mut plain = EvalTable::new(label);
    let mut weighted = weights.map(|_| EvalTable::new(format!("{label}-weighted")));
    for (action, samples) in &groups {
        let pred = stats.denormalize3d_rows(&model.infer(&stats.inputs(samples)?)?)?;
        let gt = poses3d_mm(samples);
        plain.rows.insert(*action, mpjpe(&pred, &gt)?);
        if let (Some(t), Some(w)) = (weighted.as_mut(), weights) {
            t.rows.insert(*action, weighted_mpjpe(&pred, &gt, w)?);
        }
    }
    Ok((plain, weighted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub action: ActionLabel,
    pub baseline: f64,
    pub candidate: f64,
    /// `candidate − baseline`.
    pub delta: f64,
    /// `delta / baseline × 100`.
    pub relpct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: EvalTable,
    pub candidate: EvalTable,
    pub rows: Vec<ComparisonRow>,
    pub mean_relative_improvement_pct: f64,
    pub average_improvement_pct: f64,
}

impl Comparison {
    pub fn row(&self, action: ActionLabel) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.action == action)
    }

    pub fn average_delta(&self) -> f64 {
        self.candidate.average() - self.baseline.average()
    }
}

pub fn compare(baseline: &EvalTable, candidate: &EvalTable) -> Result<Comparison> {
    if baseline.actions() != candidate.actions() {
        let names = |t: &EvalTable| t.actions().iter().map(|a| a.name()).collect::<Vec<_>>().join(",");
        return Err(Error::Table(format!(
            "action sets differ: {} has [{}], {} has [{}]",
            baseline.label,
            names(baseline),
            candidate.label,
            names(candidate)
        )));
    }
    if baseline.rows.is_empty() {
        return Err(Error::Table("cannot compare empty tables".into()));
    }
    if let Some((a, v)) = baseline.rows.iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Table(format!("baseline {a} must be positive, got {v}")));
    }
    let rows: Vec<ComparisonRow> = baseline
        .rows
        .iter()
        .map(|(&action, &b)| {
            let c = candidate.rows[&action];
            ComparisonRow {
                action,
                baseline: b,
                candidate: c,
                delta: c - b,
                relpct: (c - b) / b * 100.0,
            }
        })
        .collect();
    let mean_relative_improvement_pct =
        rows.iter().map(|r| (r.baseline - r.candidate) / r.baseline * 100.0).sum::<f64>() / rows.len() as f64;
    let (ba, ca) = (baseline.average(), candidate.average());
    Ok(Comparison {
        baseline: baseline.clone(),
        candidate: candidate.clone(),
        rows,
        mean_relative_improvement_pct,
        average_improvement_pct: (ba - ca) / ba * 100.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

/// Column set of the first table; every other table must match it.
fn shared_actions(tables: &[EvalTable]) -> Result<Vec<ActionLabel>> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Table("no tables to render".into()))?;
    let actions = first.actions();
    for t in &tables[1..] {
        if t.actions() != actions {
            return Err(Error::Table(format!(
                "table {} has different actions from {}",
                t.label, first.label
            )));
        }
    }
    Ok(actions)
}

pub fn render_table(tables: &[EvalTable], format: TableFormat) -> Result<String> {
    let actions = shared_actions(tables)?;
    let mut header: Vec<String> = vec!["version".into()];
    header.extend(actions.iter().map(|a| a.name().to_string()));
    header.push("Average".into());
    let body: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            let mut cells = vec![t.label.clone()];
            let values = actions.iter().map(|a| t.rows[a]).chain([t.average()]);
            match format {
                TableFormat::Text => cells.extend(values.map(|v| format!("{v:.1}"))),
                TableFormat::Csv => cells.extend(values.map(|v| v.to_string())),
            }
            cells
        })
        .collect();
    Ok(match format {
        TableFormat::Csv => csv_lines(&header, &body),
        TableFormat::Text => aligned(&header, &body),
    })
}

fn csv_lines(header: &[String], body: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in body {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

/// Left-aligned first column, right-aligned numbers, two-space gutters.
fn aligned(header: &[String], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(body.iter().map(Vec::as_slice)) {
        let mut line = String::new();
        for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(line, "{c:<w$}");
            } else {
                let _ = write!(line, "  {c:>w$}");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Parses table CSV. The `Average` column is optional on input and is not
/// trusted: [`EvalTable::average`] always recomputes it.
pub fn parse_tables_csv(text: &str) -> Result<Vec<EvalTable>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("version") {
        return Err(Error::Table("first column must be `version`".into()));
    }
    let mut columns: Vec<Option<ActionLabel>> = Vec::new();
    for name in header.iter().skip(1) {
        let name = name.trim();
        if name == "Average" {
            columns.push(None);
        } else {
            let a = name.parse().map_err(Error::Table)?;
            if columns.contains(&Some(a)) {
                return Err(Error::Table(format!("duplicate column {name}")));
            }
            columns.push(Some(a));
        }
    }
    let mut tables = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut t = EvalTable::new(rec.get(0).unwrap_or_default().trim());
        for (cell, col) in rec.iter().skip(1).zip(&columns) {
            let cell = cell.trim();
            let Some(action) = col else { continue };
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: i + 1,
                msg: format!("{action}: not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    msg: format!("{action}: non-finite value"),
                });
            }
            t.rows.insert(*action, v);
        }
        tables.push(t);
    }
    if tables.is_empty() {
        return Err(Error::Table("no table rows".into()));
    }
    Ok(tables)
}

/// One row per comparison: labels, `delta_<action>` and `delta_Average`,
/// `relpct_<action>` and `relpct_Average`, then both summary percentages.
pub fn render_comparisons_csv(comparisons: &[Comparison]) -> Result<String> {
    let first = comparisons
        .first()
        .ok_or_else(|| Error::Table("no comparisons to render".into()))?;
    let actions = first.baseline.actions();
    if let Some(c) = comparisons.iter().find(|c| c.baseline.actions() != actions) {
        return Err(Error::Table(format!("comparison {} has a different action set", c.candidate.label)));
    }
    let mut header: Vec<String> = vec!["baseline".into(), "candidate".into()];
    for prefix in ["delta_", "relpct_"] {
        header.extend(actions.iter().map(|a| format!("{prefix}{a}")));
        header.push(format!("{prefix}Average"));
    }
    header.push("mean_relative_improvement_pct".into());
    header.push("average_improvement_pct".into());
    let body: Vec<Vec<String>> = comparisons
        .iter()
        .map(|c| {
            let mut cells = vec![c.baseline.label.clone(), c.candidate.label.clone()];
            cells.extend(c.rows.iter().map(|r| r.delta.to_string()));
            cells.push(c.average_delta().to_string());
            cells.extend(c.rows.iter().map(|r| r.relpct.to_string()));
            cells.push((-c.average_improvement_pct).to_string());
            cells.push(c.mean_relative_improvement_pct.to_string());
            cells.push(c.average_improvement_pct.to_string());
            cells
        })
        .collect();
    Ok(csv_lines(&header, &body))
}

/// Human-readable block per comparison.
pub fn render_comparisons_text(comparisons: &[Comparison]) -> String {
    let mut out = String::new();
    for c in comparisons {
        let _ = writeln!(out, "{} vs {}", c.candidate.label, c.baseline.label);
        let header: Vec<String> = ["action", "baseline", "candidate", "delta", "relpct"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut body: Vec<Vec<String>> = c
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.action.to_string(),
                    format!("{:.1}", r.baseline),
                    format!("{:.1}", r.candidate),
                    format!("{:+.1}", r.delta),
                    format!("{:+.2}%", r.relpct),
                ]
            })
            .collect();
        body.push(vec![
            "Average".into(),
            format!("{:.1}", c.baseline.average()),
            format!("{:.1}", c.candidate.average()),
            format!("{:+.1}", c.average_delta()),
            format!("{:+.2}%", -c.average_improvement_pct),
        ]);
        out.push_str(&aligned(&header, &body));
        let _ = writeln!(
            out,
            "mean relative improvement {:.2}%, improvement of averages {:.2}%\n",
            c.mean_relative_improvement_pct, c.average_improvement_pct
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActionLabel::*;

    fn sample() -> EvalTable {
        EvalTable::new("original").with(SittingDown, 58.0).with(Phoning, 48.2)
    }

    #[test]
    fn quoted_deltas() {
        let base = EvalTable::new("original").with(SittingDown, 58.0).with(Phoning, 48.2);
        let cand = EvalTable::new("v").with(SittingDown, 53.9).with(Phoning, 43.8);
        let c = compare(&base, &cand).unwrap();
        assert!((c.row(SittingDown).unwrap().delta - (-4.1)).abs() < 1e-9);
        let ph = c.row(Phoning).unwrap();
        assert!((ph.delta - (-4.4)).abs() < 1e-9);
        assert!((ph.relpct - (-9.128630705394191)).abs() < 1e-9);
    }

    #[test]
    fn self_comparison_is_zero() {
        let c = compare(&sample(), &sample()).unwrap();
        assert!(c.rows.iter().all(|r| r.delta == 0.0 && r.relpct == 0.0));
        assert_eq!(c.mean_relative_improvement_pct, 0.0);
        assert_eq!(c.average_improvement_pct, 0.0);
    }

    #[test]
    fn mismatched_actions_rejected() {
        let other = EvalTable::new("x").with(SittingDown, 1.0);
        let err = compare(&sample(), &other).unwrap_err().to_string();
        assert!(err.contains("Phoning"), "{err}");
    }

    #[test]
    fn text_rounds_half_even_csv_keeps_precision() {
        let t = EvalTable::new("a").with(Eating, 53.94999).with(Posing, 0.25);
        let text = render_table(std::slice::from_ref(&t), TableFormat::Text).unwrap();
        assert!(text.contains("53.9") && !text.contains("53.95"));
        assert!(text.contains("0.2 ") || text.contains(" 0.2"));
        let csv = render_table(std::slice::from_ref(&t), TableFormat::Csv).unwrap();
        assert!(csv.contains("53.94999"));
        assert_eq!(format!("{:.1}", 0.75), "0.8");
    }

    #[test]
    fn structure_one_table_two_actions() {
        let csv = render_table(&[sample()], TableFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "version,Phoning,SittingDown,Average");
        assert_eq!(lines[1].split(',').count(), 4);
    }

    #[test]
    fn text_layout_is_stable() {
        let t2 = EvalTable::new("v1").with(SittingDown, 53.9).with(Phoning, 47.25);
        let text = render_table(&[sample(), t2], TableFormat::Text).unwrap();
        let want = "\
version   Phoning  SittingDown  Average
original     48.2         58.0     53.1
v1           47.2         53.9     50.6
";
        assert_eq!(text, want);
    }

    #[test]
    fn csv_round_trip() {
        let t = EvalTable::new("v2").with(Walking, 1.0 / 3.0).with(Eating, 40.4);
        let csv = render_table(std::slice::from_ref(&t), TableFormat::Csv).unwrap();
        assert_eq!(parse_tables_csv(&csv).unwrap(), vec![t]);
    }

    #[test]
    fn empty_cells_are_absent_actions() {
        let csv = "version,Eating,Posing,Average\nv1,40.4,,\nv2,,41.7,\n";
        let t = parse_tables_csv(csv).unwrap();
        assert_eq!(t[0].actions(), vec![Eating]);
        assert_eq!(t[1].actions(), vec![Posing]);
    }

    #[test]
    fn comparison_csv_has_delta_and_relpct_groups() {
        let cand = EvalTable::new("v1").with(SittingDown, 53.9).with(Phoning, 48.2);
        let c = compare(&sample(), &cand).unwrap();
        let csv = render_comparisons_csv(&[c]).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "baseline,candidate,delta_Phoning,delta_SittingDown,delta_Average,\
             relpct_Phoning,relpct_SittingDown,relpct_Average,\
             mean_relative_improvement_pct,average_improvement_pct"
        );
    }

    #[test]
    fn bad_table_csv_rejected() {
        assert!(parse_tables_csv("label,Eating\nx,1\n").is_err());
        assert!(parse_tables_csv("version,Juggling\nx,1\n").is_err());
        assert!(parse_tables_csv("version,Eating\nx,abc\n").is_err());
        assert!(parse_tables_csv("version,Eating\n").is_err());
    }
}
