//! Synthetic call traces with injected radio-layer mechanisms and their
//! expected detections.

pub mod gcc;
pub mod jitter;
pub mod scenario;
mod sim;
pub mod truth;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::trace::{Direction, Trace};

pub use gcc::{gcc_step, DelaySample, Feedback, GccConfig, GccModel};
pub use jitter::{jitter_buffer_step, FrameArrival, JitterBuffer, JitterConfig, Playout};
pub use scenario::{CellProfile, EventKind, InjectedEvent, MediaProfile, Routing, Scenario};
pub use sim::{tbs_bits, SynthStats};
pub use truth::{ground_truth, score, GroundTruth, Score, TruthEvent};

#[derive(Debug, Clone)]
pub struct Generated {
    pub trace: Trace,
    pub truth: GroundTruth,
    pub stats: SynthStats,
}

/// Runs the scenario. Identical scenarios give identical traces.
pub fn generate(scenario: &Scenario) -> Result<Generated> {
    scenario.validate()?;
    let (trace, stats) = sim::Sim::new(scenario).run();
    Ok(Generated {
        trace,
        truth: ground_truth(scenario),
        stats,
    })
}

/// Summary written next to generated traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthReport {
    pub scenario: Scenario,
    pub stats: SynthStats,
    pub truth: GroundTruth,
}

const INJECTED: [EventKind; 5] = [
    EventKind::PoorChannel,
    EventKind::CrossTraffic,
    EventKind::HarqStorm,
    EventKind::RlcRetx,
    EventKind::RrcTransition,
];

/// One injected event of `kind`, shaped for `route`.
pub fn shaped_event(kind: EventKind, route: Routing, dir: Direction, start_s: f64) -> InjectedEvent {
    let duration = match kind {
        EventKind::PoorChannel => 8.0,
        EventKind::CrossTraffic => 6.0,
        EventKind::HarqStorm => 5.0,
        EventKind::RlcRetx => 4.0,
        EventKind::RrcTransition => 1.0,
        EventKind::None => 5.0,
    };
    InjectedEvent::new(kind, start_s, duration, dir).with_route(route)
}

/// The fifteen injection scenarios: every injectable kind through every
/// routing, alternating radio direction.
pub fn scenario_suite(noise_ms: f64) -> Vec<Scenario> {
    let mut out = Vec::new();
    for (i, kind) in INJECTED.into_iter().enumerate() {
        for (j, route) in Routing::ALL.into_iter().enumerate() {
            let n = i * Routing::ALL.len() + j;
            let dir = if n.is_multiple_of(2) {
                Direction::Ul
            } else {
                Direction::Dl
            };
            out.push(Scenario {
                name: format!("{}_{}_{}", kind.as_str().to_ascii_lowercase(), route.as_str(), dir),
                duration_s: 30.0,
                seed: 1000 + n as u64,
                noise_ms,
                events: vec![shaped_event(kind, route, dir, 12.0)],
                ..Default::default()
            });
        }
    }
    out
}
