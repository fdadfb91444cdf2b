//! Table rendering for aggregated robustness results.
//!
//! A report has two kinds of table. Moment tables list each member's `μ | Var`
//! and the mixture row for one condition. Score tables list one robustness score
//! per metric for every condition in a ranking group, with the lowest (most
//! robust) score per column marked best. Zeta conditions are grouped by
//! (ID, OOD) so detectors compete; xi conditions by (ID, detector) so
//! optimizers compete.

use crate::model::MetricId;
use crate::store::{write_atomic, AggregateRow, ConditionKind, StoreError};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!(
                "unknown report format `{other}` (expected md or csv)"
            )),
        }
    }
}

/// Rounds to three decimals and drops trailing zeros, keeping at least one decimal.
pub fn format_3dp(value: f64) -> String {
    let mut s = format!("{value:.3}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if s == "-0.0" {
        s.remove(0);
    }
    s
}

/// A `μ | Var` table cell, e.g. `8.634 | 5.506`.
pub fn format_moment_cell(mean: f64, variance: f64) -> String {
    format!("{} | {}", format_3dp(mean), format_3dp(variance))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ConditionId {
    kind: ConditionKind,
    id_dataset: String,
    ood_dataset: String,
    detector: String,
    optimizer: String,
}

impl ConditionId {
    fn of(row: &AggregateRow) -> Self {
        Self {
            kind: row.kind,
            id_dataset: row.id_dataset.clone(),
            ood_dataset: row.ood_dataset.clone(),
            detector: row.detector.as_str().to_string(),
            optimizer: row.optimizer.clone(),
        }
    }

    fn name(&self) -> String {
        match self.kind {
            ConditionKind::Zeta => {
                format!("{}/{}/{}", self.id_dataset, self.ood_dataset, self.detector)
            }
            ConditionKind::Xi => {
                format!("{}/{}/{}", self.id_dataset, self.detector, self.optimizer)
            }
        }
    }

    /// Ranking group and the label of this condition within it.
    fn group(&self) -> (String, String) {
        match self.kind {
            ConditionKind::Zeta => (
                format!("zeta {}/{}", self.id_dataset, self.ood_dataset),
                self.detector.clone(),
            ),
            ConditionKind::Xi => (
                format!("xi {}/{}", self.id_dataset, self.detector),
                self.optimizer.clone(),
            ),
        }
    }
}

/// `(mean, variance)` per metric.
type MomentCells = BTreeMap<MetricId, (f64, f64)>;
type ScoreCells = BTreeMap<MetricId, f64>;

#[derive(Debug, Default)]
struct ConditionTable {
    /// Member name to (mean, variance) per metric, in first-seen order.
    members: Vec<(String, MomentCells)>,
    mixture: MomentCells,
    scores: ScoreCells,
}

fn collect(rows: &[AggregateRow]) -> Result<BTreeMap<ConditionId, ConditionTable>, String> {
    let mut tables: BTreeMap<ConditionId, ConditionTable> = BTreeMap::new();
    for row in rows {
        let table = tables.entry(ConditionId::of(row)).or_default();
        match &row.member {
            Some(name) => {
                let slot = match table.members.iter().position(|(n, _)| n == name) {
                    Some(i) => i,
                    None => {
                        table.members.push((name.clone(), BTreeMap::new()));
                        table.members.len() - 1
                    }
                };
                table.members[slot]
                    .1
                    .insert(row.metric, (row.mean, row.variance));
            }
            None => {
                table.mixture.insert(row.metric, (row.mean, row.variance));
                let score = row
                    .score
                    .ok_or_else(|| format!("mixture row for {} has no score", row.metric))?;
                table.scores.insert(row.metric, score);
            }
        }
    }
    for (id, table) in &tables {
        if let Some(m) = MetricId::ALL
            .into_iter()
            .find(|m| !table.scores.contains_key(m))
        {
            return Err(format!(
                "condition {} has no mixture row for {m}",
                id.name()
            ));
        }
    }
    Ok(tables)
}

struct ScoreGroup<'a> {
    title: String,
    rows: Vec<(String, &'a ScoreCells)>,
}

impl ScoreGroup<'_> {
    fn best(&self, metric: MetricId) -> f64 {
        self.rows
            .iter()
            .map(|(_, s)| s[&metric])
            .fold(f64::INFINITY, f64::min)
    }
}

fn score_groups(tables: &BTreeMap<ConditionId, ConditionTable>) -> Vec<ScoreGroup<'_>> {
    let mut groups: BTreeMap<String, Vec<(String, &ScoreCells)>> = BTreeMap::new();
    for (id, table) in tables {
        let (title, label) = id.group();
        groups
            .entry(title)
            .or_default()
            .push((label, &table.scores));
    }
    groups
        .into_iter()
        .map(|(title, mut rows)| {
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            ScoreGroup { title, rows }
        })
        .collect()
}

fn md_escape(cell: &str) -> String {
    cell.replace('|', "\\|")
}

fn md_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    out.push('|');
    for c in cells {
        let _ = write!(out, " {} |", md_escape(&c));
    }
    out.push('\n');
}

fn md_rule(out: &mut String, columns: usize) {
    out.push('|');
    for _ in 0..columns {
        out.push_str("---|");
    }
    out.push('\n');
}

pub fn render_markdown(rows: &[AggregateRow]) -> Result<String, String> {
    let tables = collect(rows)?;
    let mut out = String::new();
    for (id, table) in &tables {
        let member_label = match id.kind {
            ConditionKind::Zeta => "Optimizer",
            ConditionKind::Xi => "OOD set",
        };
        let _ = writeln!(out, "## {} {}\n", id.kind.as_str(), id.name());
        md_row(
            &mut out,
            std::iter::once(member_label.to_string()).chain(
                MetricId::ALL
                    .iter()
                    .map(|m| format!("{} (μ | Var)", m.label())),
            ),
        );
        md_rule(&mut out, 6);
        for (name, moments) in &table.members {
            md_row(
                &mut out,
                std::iter::once(name.clone()).chain(MetricId::ALL.iter().map(|m| {
                    moments
                        .get(m)
                        .map(|&(mu, var)| format_moment_cell(mu, var))
                        .unwrap_or_default()
                })),
            );
        }
        md_row(
            &mut out,
            std::iter::once("Mixture".to_string()).chain(MetricId::ALL.iter().map(|m| {
                let (mu, var) = table.mixture[m];
                format_moment_cell(mu, var)
            })),
        );
        out.push('\n');
    }
    for group in score_groups(&tables) {
        let _ = writeln!(out, "## Robustness scores, {}\n", group.title);
        md_row(
            &mut out,
            std::iter::once("Condition".to_string()).chain(MetricId::ALL.iter().map(|m| {
                let formula = match m.default_orientation() {
                    crate::model::Orientation::HigherBetter => "√Var/μ",
                    crate::model::Orientation::LowerBetter => "μ·√Var",
                };
                format!("{} ({formula})", m.label())
            })),
        );
        md_rule(&mut out, 6);
        for (label, scores) in &group.rows {
            md_row(
                &mut out,
                std::iter::once(label.clone()).chain(MetricId::ALL.iter().map(|&m| {
                    let cell = format_3dp(scores[&m]);
                    if scores[&m] == group.best(m) {
                        format!("**{cell}**")
                    } else {
                        cell
                    }
                })),
            );
        }
        out.push('\n');
    }
    Ok(out)
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "table",
    "group",
    "row",
    "statistic",
    "fpr_at_95tpr",
    "detection_error",
    "auroc",
    "aupr_in",
    "aupr_out",
    "best",
];

pub fn render_csv(rows: &[AggregateRow]) -> Result<String, String> {
    let tables = collect(rows)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut write = |record: Vec<String>| w.write_record(&record).map_err(|e| e.to_string());
    write(REPORT_CSV_HEADER.iter().map(|s| s.to_string()).collect())?;
    for (id, table) in &tables {
        let group = format!("{} {}", id.kind.as_str(), id.name());
        let lines = table
            .members
            .iter()
            .map(|(n, m)| (n.clone(), m))
            .chain(std::iter::once(("mixture".to_string(), &table.mixture)));
        for (name, moments) in lines {
            for (stat, pick) in [("mean", 0), ("variance", 1)] {
                let mut record = vec!["moments".into(), group.clone(), name.clone(), stat.into()];
                record.extend(MetricId::ALL.iter().map(|m| {
                    moments
                        .get(m)
                        .map(|&(mu, var)| format_3dp(if pick == 0 { mu } else { var }))
                        .unwrap_or_default()
                }));
                record.push(String::new());
                write(record)?;
            }
        }
    }
    for group in score_groups(&tables) {
        for (label, scores) in &group.rows {
            let mut record = vec![
                "scores".into(),
                group.title.clone(),
                label.clone(),
                "score".into(),
            ];
            record.extend(MetricId::ALL.iter().map(|m| format_3dp(scores[m])));
            let best: Vec<&str> = MetricId::ALL
                .iter()
                .filter(|&&m| scores[&m] == group.best(m))
                .map(|m| m.as_str())
                .collect();
            record.push(best.join(";"));
            write(record)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn render(rows: &[AggregateRow], format: ReportFormat) -> Result<String, String> {
    if rows.is_empty() {
        return Err("no aggregate rows to report".into());
    }
    match format {
        ReportFormat::Markdown => render_markdown(rows),
        ReportFormat::Csv => render_csv(rows),
    }
}

/// Renders and writes a report; an empty row list is an error.
pub fn write_table(
    rows: &[AggregateRow],
    path: &Path,
    format: ReportFormat,
) -> Result<(), StoreError> {
    if rows.is_empty() {
        return Err(StoreError::Empty("aggregate list"));
    }
    let text = render(rows, format).map_err(|reason| StoreError::Format {
        path: path.to_path_buf(),
        reason,
    })?;
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_decimal_formatting() {
        assert_eq!(format_3dp(8.63412), "8.634");
        assert_eq!(format_3dp(11.42), "11.42");
        assert_eq!(format_3dp(16.5), "16.5");
        assert_eq!(format_3dp(50.0), "50.0");
        assert_eq!(format_3dp(-1e-9), "0.0");
        assert_eq!(format_moment_cell(8.6366, 5.5060), "8.637 | 5.506");
    }

    #[test]
    fn format_parsing() {
        assert_eq!(
            "md".parse::<ReportFormat>().unwrap(),
            ReportFormat::Markdown
        );
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("html".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(render(&[], ReportFormat::Csv).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(write_table(&[], &dir.path().join("r.md"), ReportFormat::Markdown).is_err());
    }
}
