//! Expected detections for a scenario, and scoring of pipeline output
//! against them.

use serde::{Deserialize, Serialize};

use crate::detect::slot_labels;
use crate::graph::{default_graph, enumerate_chains, CausalGraph};
use crate::stats::WindowResult;
use crate::trace::Direction;

use super::scenario::{EventKind, Routing, Scenario};

/// Matches in windows that overlap an event, or end within this long after
/// it, are attributed to the event.
pub const SETTLE_S: f64 = 1.0;

/// Structural cause present in every uplink window; never injected, so it is
/// left out of scoring.
pub const STRUCTURAL_CAUSE: &str = "ul_scheduling";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: EventKind,
    pub dir: Direction,
    pub route: Routing,
    pub start_s: f64,
    pub end_s: f64,
    /// Media stream whose chain should surface.
    pub media_dir: Direction,
    /// Causes a correct match may name. The first one is the injected kind.
    pub causes: Vec<String>,
    /// Slot labels along the expected chain.
    pub expected_bits: Vec<String>,
    pub consequence: String,
    pub expected_chains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub events: Vec<TruthEvent>,
}

pub fn ground_truth(sc: &Scenario) -> GroundTruth {
    let g = default_graph();
    let chains = enumerate_chains(&g).expect("built-in graph is acyclic");
    let labels = slot_labels();
    let events = sc
        .events
        .iter()
        .filter(|ev| ev.kind != EventKind::None)
        .map(|ev| {
            let media_dir = ev.route.media_dir(ev.dir);
            let via = match ev.route {
                Routing::Pushback => "rev_delay_up",
                _ => "fwd_delay_up",
            };
            let mut causes: Vec<String> = ev.kind.cause().into_iter().map(String::from).collect();
            if ev.kind == EventKind::RlcRetx {
                // Every RLC recovery follows a run of failed HARQ attempts.
                causes.push("harq_retx".into());
            }
            let expected: Vec<_> = chains
                .iter()
                .filter(|c| {
                    Some(c.cause()) == ev.kind.cause()
                        && c.consequence() == ev.route.consequence()
                        && c.nodes.iter().any(|n| n == via)
                })
                .collect();
            let expected_bits = expected
                .first()
                .map(|c| {
                    g.path_slots(c, media_dir)
                        .into_iter()
                        .map(|s| labels[s].clone())
                        .collect()
                })
                .unwrap_or_default();
            TruthEvent {
                kind: ev.kind,
                dir: ev.dir,
                route: ev.route,
                start_s: ev.start_s,
                end_s: ev.end_s(),
                media_dir,
                causes,
                expected_bits,
                consequence: ev.route.consequence().to_string(),
                expected_chains: expected.iter().map(|c| c.render()).collect(),
            }
        })
        .collect();
    GroundTruth {
        scenario: sc.name.clone(),
        seed: sc.seed,
        duration_s: sc.duration_s,
        events,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub true_positives: usize,
    pub false_positives: usize,
    pub expected_events: usize,
    pub recalled_events: usize,
}

impl Score {
    /// 1.0 when nothing was matched.
    pub fn precision(&self) -> f64 {
        let n = self.true_positives + self.false_positives;
        if n == 0 {
            1.0
        } else {
            self.true_positives as f64 / n as f64
        }
    }

    /// 1.0 when nothing was expected.
    pub fn recall(&self) -> f64 {
        if self.expected_events == 0 {
            1.0
        } else {
            self.recalled_events as f64 / self.expected_events as f64
        }
    }

    pub fn merge(&mut self, other: &Score) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.expected_events += other.expected_events;
        self.recalled_events += other.recalled_events;
    }
}

fn overlaps(ws: f64, window_s: f64, ev: &TruthEvent) -> bool {
    ws < ev.end_s + SETTLE_S && ws + window_s > ev.start_s
}

/// A match is a true positive when some event overlapping its window lists
/// its cause and, for direction-bound causes, sits on the radio direction
/// the cause was read from. An event is recalled when one of its expected
/// chains is matched on its media stream in an overlapping window.
pub fn score(truth: &GroundTruth, results: &[WindowResult], graph: &CausalGraph, window_s: f64) -> Score {
    let mut s = Score::default();
    for r in results {
        let ws = r.window_start.as_secs_f64();
        for m in &r.matches {
            if m.cause_id == STRUCTURAL_CAUSE {
                continue;
            }
            let cause_dir = if graph.is_reverse_path(&m.path) {
                m.stream_dir.opposite()
            } else {
                m.stream_dir
            };
            let ok = truth.events.iter().any(|e| {
                overlaps(ws, window_s, e)
                    && e.causes.contains(&m.cause_id)
                    && (m.cause_id == "rrc_state" || e.dir == cause_dir)
            });
            if ok {
                s.true_positives += 1;
            } else {
                s.false_positives += 1;
            }
        }
    }
    for e in truth.events.iter().filter(|e| !e.expected_chains.is_empty()) {
        s.expected_events += 1;
        let hit = results.iter().any(|r| {
            r.dir == e.media_dir
                && overlaps(r.window_start.as_secs_f64(), window_s, e)
                && r.matches.iter().any(|m| e.expected_chains.contains(&m.path.render()))
        });
        if hit {
            s.recalled_events += 1;
        }
    }
    s
}
