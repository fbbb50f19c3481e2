//! Aggregate reports over per-window results: debounced event frequency,
//! conditional probability of causes given a consequence, and chain ratios.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::FeatureVector;
use crate::error::{DominoError, Result};
use crate::graph::{Attribution, ChainMatch};
use crate::trace::{Direction, Timestamp};

/// Column label for consequences without any matching chain.
pub const UNKNOWN: &str = "UNKNOWN";

/// Default dedup priority for multi-cause windows, highest first.
pub const DEFAULT_PRIORITY: [&str; 6] = [
    "rlc_retx",
    "rrc_state",
    "cross_traffic",
    "poor_channel",
    "harq_retx",
    "ul_scheduling",
];

/// Everything the reports need about one (window, media direction).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_start: Timestamp,
    pub dir: Direction,
    pub features: FeatureVector,
    pub matches: Vec<ChainMatch>,
    pub attribution: Attribution,
}

/// A rendered report: named rows of optional numbers (None prints as n/a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub row_header: String,
    pub columns: Vec<String>,
    /// Decimal places per column in the text rendering.
    pub decimals: Vec<usize>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub dir: Direction,
    pub label: String,
    /// Maximal runs of consecutive windows with the bit set.
    pub occurrences: usize,
    pub window_hits: usize,
    pub per_minute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub span_minutes: f64,
    pub rows: Vec<FrequencyRow>,
}

fn by_dir(results: &[WindowResult]) -> BTreeMap<Direction, Vec<&WindowResult>> {
    let mut out: BTreeMap<Direction, Vec<&WindowResult>> = BTreeMap::new();
    for r in results {
        out.entry(r.dir).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.window_start);
    }
    out
}

/// Occurrences per minute of every slot, per media direction. Consecutive
/// windows with the bit set count once.
pub fn frequency(results: &[WindowResult], labels: &[String], span_s: f64) -> Result<FrequencyReport> {
    if !(span_s > 0.0 && span_s.is_finite()) {
        return Err(DominoError::InvalidArgument(format!(
            "span must be positive, got {span_s}"
        )));
    }
    let minutes = span_s / 60.0;
    let mut rows = Vec::new();
    for (dir, windows) in by_dir(results) {
        for (slot, label) in labels.iter().enumerate() {
            let mut runs = 0;
            let mut hits = 0;
            let mut prev = false;
            for w in &windows {
                let on = w.features.get(slot);
                hits += usize::from(on);
                runs += usize::from(on && !prev);
                prev = on;
            }
            rows.push(FrequencyRow {
                dir,
                label: label.clone(),
                occurrences: runs,
                window_hits: hits,
                per_minute: runs as f64 / minutes,
            });
        }
    }
    Ok(FrequencyReport {
        span_minutes: minutes,
        rows,
    })
}

impl FrequencyReport {
    pub fn table(&self) -> Table {
        Table {
            name: "frequency".into(),
            row_header: "stream:event".into(),
            columns: vec!["occurrences".into(), "window_hits".into(), "per_minute".into()],
            decimals: vec![0, 0, 3],
            rows: self
                .rows
                .iter()
                .map(|r| {
                    (
                        format!("{}:{}", r.dir, r.label),
                        vec![
                            Some(r.occurrences as f64),
                            Some(r.window_hits as f64),
                            Some(r.per_minute),
                        ],
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub consequence: String,
    pub occurrences: usize,
    /// Percent per cause, in the order of `ConditionalTable::causes`;
    /// `None` when the consequence never occurred.
    pub percent: Vec<Option<f64>>,
    pub unknown: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub causes: Vec<String>,
    pub rows: Vec<ConditionalRow>,
}

/// P(cause attributed | consequence detected) in percent, counting each
/// (window, direction) attribution record once.
pub fn conditional(results: &[WindowResult], causes: &[String], consequences: &[String]) -> ConditionalTable {
    let mut occ: HashMap<&str, usize> = HashMap::new();
    let mut hit: HashMap<(&str, &str), usize> = HashMap::new();
    let mut unknown: HashMap<&str, usize> = HashMap::new();
    for r in results {
        for (q, set) in &r.attribution.0 {
            *occ.entry(q).or_default() += 1;
            if set.is_empty() {
                *unknown.entry(q).or_default() += 1;
            }
            for c in set {
                *hit.entry((q, c)).or_default() += 1;
            }
        }
    }
    let pct = |n: usize, d: usize| (d > 0).then(|| 100.0 * n as f64 / d as f64);
    let rows = consequences
        .iter()
        .map(|q| {
            let d = occ.get(q.as_str()).copied().unwrap_or(0);
            ConditionalRow {
                consequence: q.clone(),
                occurrences: d,
                percent: causes
                    .iter()
                    .map(|c| pct(hit.get(&(q.as_str(), c.as_str())).copied().unwrap_or(0), d))
                    .collect(),
                unknown: pct(unknown.get(q.as_str()).copied().unwrap_or(0), d),
            }
        })
        .collect();
    ConditionalTable {
        causes: causes.to_vec(),
        rows,
    }
}

impl ConditionalTable {
    pub fn table(&self) -> Table {
        let mut columns = vec!["occurrences".to_string()];
        columns.extend(self.causes.iter().cloned());
        columns.push(UNKNOWN.into());
        let mut decimals = vec![0];
        decimals.extend(std::iter::repeat_n(1, self.causes.len() + 1));
        Table {
            name: "conditional".into(),
            row_header: "consequence".into(),
            columns,
            decimals,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut v = vec![Some(r.occurrences as f64)];
                    v.extend(r.percent.iter().copied());
                    v.push(r.unknown);
                    (r.consequence.clone(), v)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DedupMode {
    /// One instance per (window, direction, consequence), credited to the
    /// highest-priority cause.
    #[default]
    Priority,
    /// One instance per distinct cause.
    PerCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRatioRow {
    pub consequence: String,
    /// Raw cause-level chain instances: distinct causes summed over every
    /// (window, direction) where the consequence matched.
    pub instances: usize,
    pub counted: Vec<usize>,
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRatioTable {
    pub causes: Vec<String>,
    pub rows: Vec<ChainRatioRow>,
}

impl ChainRatioTable {
    pub fn row_total(&self, consequence: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.consequence == consequence)
            .map(|r| r.percent.iter().sum())
    }
}

/// Ratio of chain instances by cause, per consequence. The denominator of
/// each row is the number of raw cause-level instances, so rows total less
/// than 100% whenever a window carries several causes for one consequence
/// and the priority mode keeps only one of them.
pub fn chain_ratios(results: &[WindowResult], priority: &[String], mode: DedupMode) -> ChainRatioTable {
    let rank = |c: &str| priority.iter().position(|p| p == c).unwrap_or(priority.len());
    let mut per: BTreeMap<String, (usize, BTreeMap<String, usize>)> = BTreeMap::new();
    let mut all_causes: BTreeSet<String> = BTreeSet::new();
    for r in results {
        let mut groups: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for m in &r.matches {
            groups.entry(&m.consequence_id).or_default().insert(&m.cause_id);
        }
        for (q, causes) in groups {
            let entry = per.entry(q.to_string()).or_default();
            entry.0 += causes.len();
            all_causes.extend(causes.iter().map(|c| c.to_string()));
            let credited: Vec<&str> = match mode {
                DedupMode::PerCause => causes.iter().copied().collect(),
                DedupMode::Priority => causes
                    .iter()
                    .copied()
                    .min_by_key(|c| (rank(c), *c))
                    .into_iter()
                    .collect(),
            };
            for c in credited {
                *entry.1.entry(c.to_string()).or_default() += 1;
            }
        }
    }
    let mut causes: Vec<String> = all_causes.into_iter().collect();
    causes.sort_by_key(|c| (rank(c), c.clone()));
    let rows = per
        .into_iter()
        .map(|(q, (instances, counts))| {
            let counted: Vec<usize> = causes.iter().map(|c| counts.get(c).copied().unwrap_or(0)).collect();
            ChainRatioRow {
                consequence: q,
                instances,
                percent: counted.iter().map(|&n| 100.0 * n as f64 / instances as f64).collect(),
                counted,
            }
        })
        .collect();
    ChainRatioTable { causes, rows }
}

impl ChainRatioTable {
    pub fn table(&self) -> Table {
        let mut columns = vec!["instances".to_string()];
        columns.extend(self.causes.iter().cloned());
        columns.push("total".into());
        let mut decimals = vec![0];
        decimals.extend(std::iter::repeat_n(1, self.causes.len() + 1));
        Table {
            name: "chain_ratios".into(),
            row_header: "consequence".into(),
            columns,
            decimals,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut v = vec![Some(r.instances as f64)];
                    v.extend(r.percent.iter().map(|p| Some(*p)));
                    v.push(Some(r.percent.iter().sum()));
                    (r.consequence.clone(), v)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = DominoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table-text" | "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(DominoError::Usage(format!(
                "unknown format `{s}` (table-text, csv, jsonl)"
            ))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "txt",
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

pub const CSV_HEADER: &str = "report,row,column,value";
const NA: &str = "n/a";

fn fmt_cell(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => NA.into(),
    }
}

fn render_text(t: &Table, out: &mut String) {
    let _ = writeln!(out, "== {} ==", t.name);
    let cells: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|(_, v)| v.iter().zip(&t.decimals).map(|(x, d)| fmt_cell(*x, *d)).collect())
        .collect();
    let first = t
        .rows
        .iter()
        .map(|(r, _)| r.len())
        .chain([t.row_header.len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = t
        .columns
        .iter()
        .enumerate()
        .map(|(i, c)| cells.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let _ = write!(out, "{:<first$}", t.row_header);
    for (c, w) in t.columns.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');
    for ((r, _), row) in t.rows.iter().zip(&cells) {
        let _ = write!(out, "{r:<first$}");
        for (c, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders tables deterministically in the chosen format.
pub fn render(tables: &[Table], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Text => {
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                render_text(t, &mut out);
            }
        }
        Format::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for t in tables {
                for (r, v) in &t.rows {
                    for (c, x) in t.columns.iter().zip(v) {
                        let value = x.map_or_else(|| NA.to_string(), |x| x.to_string());
                        let _ = writeln!(out, "{},{},{},{}", t.name, csv_field(r), csv_field(c), value);
                    }
                }
            }
        }
        Format::Jsonl => {
            for t in tables {
                for (r, v) in &t.rows {
                    for (c, x) in t.columns.iter().zip(v) {
                        let line = serde_json::json!({
                            "report": t.name,
                            "row": r,
                            "column": c,
                            "value": x,
                        });
                        let _ = writeln!(out, "{line}");
                    }
                }
            }
        }
    }
    out
}

pub fn export(tables: &[Table], format: Format, path: &Path) -> Result<()> {
    std::fs::write(path, render(tables, format)).map_err(|e| DominoError::io(path, e))
}

/// One cell of a csv export.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvCell {
    pub report: String,
    pub row: String,
    pub column: String,
    pub value: Option<f64>,
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                chars.next();
                out.last_mut().expect("field").push('"');
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(String::new()),
            _ => out.last_mut().expect("field").push(c),
        }
    }
    out
}

/// Reads back a csv export.
pub fn parse_csv(text: &str) -> Result<Vec<CsvCell>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(DominoError::Ingest("missing report csv header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f = split_csv_line(l);
            if f.len() != 4 {
                return Err(DominoError::Ingest(format!("bad report csv line `{l}`")));
            }
            let value = if f[3] == NA {
                None
            } else {
                Some(
                    f[3].parse()
                        .map_err(|_| DominoError::Ingest(format!("bad value in `{l}`")))?,
                )
            };
            Ok(CsvCell {
                report: f[0].clone(),
                row: f[1].clone(),
                column: f[2].clone(),
                value,
            })
        })
        .collect()
}
