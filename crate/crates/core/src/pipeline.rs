//! End-to-end analysis of a trace: sliding windows in both media
//! directions, feature extraction, chain matching, attribution, and the
//! saved match file that reports can be recomputed from.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{featurize_view, plan_windows, slot_labels, DetectorConfig};
use crate::dsl::DetectionPlan;
use crate::error::{DominoError, Result};
use crate::graph::{default_graph, ChainMatcher, ChainPath, NodeKind};
use crate::stats::{chain_ratios, conditional, frequency, DedupMode, Table, WindowResult};
use crate::trace::{slice, Direction, Trace, DEFAULT_STEP_S, DEFAULT_WINDOW_S};

enum Features {
    Builtin,
    Plan(Box<DetectionPlan>),
}

pub struct Pipeline {
    features: Features,
    matcher: ChainMatcher,
    labels: Vec<String>,
    pub cfg: DetectorConfig,
    pub window_s: f64,
    pub step_s: f64,
}

impl Pipeline {
    /// Hard-coded detector with the default graph and all of its chains.
    pub fn builtin(cfg: DetectorConfig) -> Self {
        Pipeline {
            features: Features::Builtin,
            matcher: ChainMatcher::for_graph(default_graph()).expect("built-in graph is valid"),
            labels: slot_labels(),
            cfg,
            window_s: DEFAULT_WINDOW_S,
            step_s: DEFAULT_STEP_S,
        }
    }

    /// Features, graph and chains all come from a compiled plan.
    pub fn from_plan(plan: DetectionPlan, cfg: DetectorConfig) -> Self {
        Pipeline {
            matcher: plan.matcher(),
            labels: plan.slot_labels(),
            features: Features::Plan(Box::new(plan)),
            cfg,
            window_s: DEFAULT_WINDOW_S,
            step_s: DEFAULT_STEP_S,
        }
    }

    pub fn with_window(mut self, window_s: f64, step_s: f64) -> Result<Self> {
        for (name, v) in [("window", window_s), ("step", step_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DominoError::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        self.window_s = window_s;
        self.step_s = step_s;
        Ok(self)
    }

    /// Requires each matched chain's node onsets to be in order. Only the
    /// built-in detector records onsets.
    pub fn with_strict_order(mut self, strict: bool) -> Self {
        self.matcher = self.matcher.with_strict_order(strict);
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn chains(&self) -> &[ChainPath] {
        &self.matcher.chains
    }

    fn node_ids(&self, kind: NodeKind) -> Vec<String> {
        self.matcher
            .graph
            .nodes()
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.id.clone())
            .collect()
    }

    /// Analyses every window in both media directions. Results are ordered
    /// by window, uplink before downlink.
    pub fn run(&self, trace: &Trace) -> Result<Analysis> {
        let (windows, warning) = plan_windows(trace, self.window_s, self.step_s)?;
        let results: Vec<WindowResult> = windows
            .par_iter()
            .flat_map_iter(|w| {
                let view = slice(trace, w);
                Direction::BOTH.into_iter().map(move |dir| (view, dir))
            })
            .map(|(view, dir)| {
                let features = match &self.features {
                    Features::Builtin => featurize_view(&view, dir, &self.cfg),
                    Features::Plan(p) => p.evaluate(&view, dir, &self.cfg),
                };
                let matches = self.matcher.matches(&features, dir, view.window.start);
                let attribution = self.matcher.attribute(&features, dir, &matches);
                WindowResult {
                    window_start: view.window.start,
                    dir,
                    features,
                    matches,
                    attribution,
                }
            })
            .collect();
        let span_s = trace
            .span()
            .map_or(0.0, |(a, b)| (b.micros() - a.micros()) as f64 / 1e6);
        Ok(Analysis {
            header: MatchHeader {
                labels: self.labels.clone(),
                causes: self.node_ids(NodeKind::Cause),
                consequences: self.node_ids(NodeKind::Consequence),
                span_s,
                window_s: self.window_s,
                step_s: self.step_s,
            },
            results,
            warning,
        })
    }
}

/// First line of a match file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchHeader {
    pub labels: Vec<String>,
    pub causes: Vec<String>,
    pub consequences: Vec<String>,
    pub span_s: f64,
    pub window_s: f64,
    pub step_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub header: MatchHeader,
    pub results: Vec<WindowResult>,
    pub warning: Option<String>,
}

impl Analysis {
    /// Frequency, conditional-probability and chain-ratio tables.
    pub fn reports(&self, priority: &[String], mode: DedupMode) -> Result<Vec<Table>> {
        let h = &self.header;
        Ok(vec![
            frequency(&self.results, &h.labels, h.span_s)?.table(),
            conditional(&self.results, &h.causes, &h.consequences).table(),
            chain_ratios(&self.results, priority, mode).table(),
        ])
    }

    pub fn match_count(&self) -> usize {
        self.results.iter().map(|r| r.matches.len()).sum()
    }

    /// JSON lines: the header, then one window result per line.
    pub fn write_matches(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        for r in &self.results {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn read_matches(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |n: usize, e: String| DominoError::Ingest(format!("match file line {}: {e}", n + 1));
        let (n, first) = lines
            .next()
            .ok_or_else(|| DominoError::Ingest("match file is empty".into()))?;
        let first = first.map_err(|e| bad(n, e.to_string()))?;
        let header: MatchHeader = serde_json::from_str(&first).map_err(|e| bad(n, e.to_string()))?;
        let mut results = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(|e| bad(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: WindowResult = serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?;
            if r.features.len() != header.labels.len() {
                return Err(bad(
                    n,
                    format!(
                        "{} feature bits, header lists {}",
                        r.features.len(),
                        header.labels.len()
                    ),
                ));
            }
            results.push(r);
        }
        Ok(Analysis {
            header,
            results,
            warning: None,
        })
    }
}
