//! Per-window event detection and the 36-slot feature vector.
//!
//! Slot layout:
//!
//! | slots  | events                          | selector            |
//! |--------|---------------------------------|---------------------|
//! | 0..20  | A1..A10, each × {local, remote} | index `2*(k-1)+side`|
//! | 20, 21 | N11 forward, N12 reverse delay  | media direction     |
//! | 22..34 | R13..R18, each × {ul, dl}       | index `22+2*(k-13)+dir` |
//! | 34     | S19 uplink scheduling           |                     |
//! | 35     | S20 RRC state change            |                     |

mod conditions;
mod config;
pub mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

pub use config::{DetectorConfig, CONFIG_KEYS};

use crate::error::{DominoError, Result};
use crate::trace::{slice, Direction, PacketKind, Side, Timestamp, Trace, Window, WindowView};
use conditions as cond;

pub const FEATURE_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventId {
    A1InFpsDrop,
    A2OutFpsDrop,
    A3OutResDrop,
    A4JbDrain,
    A5TargetDrop,
    A6GccOveruse,
    A7PushbackDrop,
    A8CwndFull,
    A9OutstandingUp,
    A10PushbackNeqTarget,
    N11FwdDelayUp,
    N12RevDelayUp,
    R13TbsDrop,
    R14RateGap,
    R15CrossTraffic,
    R16ChannelDegraded,
    R17HarqRetx,
    R18RlcRetx,
    S19UlScheduling,
    S20RrcChange,
}

/// How an event is instantiated into feature slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// One slot per client side.
    App,
    /// One slot, evaluated relative to the media direction under analysis.
    Packet,
    /// One slot per radio direction.
    Ran,
    /// One slot.
    Single,
}

/// Concrete side or direction an event is evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    Side(Side),
    Dir(Direction),
    None,
}

impl EventId {
    pub const ALL: [EventId; 20] = [
        EventId::A1InFpsDrop,
        EventId::A2OutFpsDrop,
        EventId::A3OutResDrop,
        EventId::A4JbDrain,
        EventId::A5TargetDrop,
        EventId::A6GccOveruse,
        EventId::A7PushbackDrop,
        EventId::A8CwndFull,
        EventId::A9OutstandingUp,
        EventId::A10PushbackNeqTarget,
        EventId::N11FwdDelayUp,
        EventId::N12RevDelayUp,
        EventId::R13TbsDrop,
        EventId::R14RateGap,
        EventId::R15CrossTraffic,
        EventId::R16ChannelDegraded,
        EventId::R17HarqRetx,
        EventId::R18RlcRetx,
        EventId::S19UlScheduling,
        EventId::S20RrcChange,
    ];

    /// 1-based row number in the condition table.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn family(self) -> Family {
        match self.number() {
            1..=10 => Family::App,
            11 | 12 => Family::Packet,
            13..=18 => Family::Ran,
            _ => Family::Single,
        }
    }

    /// Name used for the event in chain definitions.
    pub fn name(self) -> &'static str {
        match self {
            EventId::A1InFpsDrop => "in_fps_drop",
            EventId::A2OutFpsDrop => "out_fps_drop",
            EventId::A3OutResDrop => "out_res_drop",
            EventId::A4JbDrain => "jb_drain",
            EventId::A5TargetDrop => "target_drop",
            EventId::A6GccOveruse => "gcc_overuse",
            EventId::A7PushbackDrop => "pushback_drop",
            EventId::A8CwndFull => "cwnd_full",
            EventId::A9OutstandingUp => "outstanding_up",
            EventId::A10PushbackNeqTarget => "pushback_neq_target",
            EventId::N11FwdDelayUp => "fwd_delay_up",
            EventId::N12RevDelayUp => "rev_delay_up",
            EventId::R13TbsDrop => "tbs_drop",
            EventId::R14RateGap => "rate_gap",
            EventId::R15CrossTraffic => "cross_traffic",
            EventId::R16ChannelDegraded => "channel_degraded",
            EventId::R17HarqRetx => "harq_retx",
            EventId::R18RlcRetx => "rlc_retx",
            EventId::S19UlScheduling => "ul_scheduling",
            EventId::S20RrcChange => "rrc_change",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        EventId::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn selectors(self) -> Vec<Selector> {
        match self.family() {
            Family::App => Side::BOTH.into_iter().map(Selector::Side).collect(),
            Family::Ran => Direction::BOTH.into_iter().map(Selector::Dir).collect(),
            Family::Packet | Family::Single => vec![Selector::None],
        }
    }

    /// Feature slot for this event and selector.
    pub fn slot(self, sel: Selector) -> Result<usize> {
        let n = self.number();
        match (self.family(), sel) {
            (Family::App, Selector::Side(s)) => Ok(2 * (n - 1) + side_index(s)),
            (Family::Packet, Selector::None) => Ok(n + 9),
            (Family::Ran, Selector::Dir(d)) => Ok(22 + 2 * (n - 13) + dir_index(d)),
            (Family::Single, Selector::None) => Ok(n + 15),
            (fam, sel) => Err(DominoError::Usage(format!(
                "{} ({fam:?} event) cannot take selector {sel:?}",
                self.name()
            ))),
        }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn side_index(s: Side) -> usize {
    match s {
        Side::Local => 0,
        Side::Remote => 1,
    }
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Ul => 0,
        Direction::Dl => 1,
    }
}

/// One slot of the canonical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotInfo {
    pub event: EventId,
    pub selector: Selector,
}

impl SlotInfo {
    pub fn label(&self) -> String {
        match self.selector {
            Selector::Side(s) => format!("{}.{}", self.event.name(), s),
            Selector::Dir(d) => format!("{}.{}", self.event.name(), d),
            Selector::None => self.event.name().to_string(),
        }
    }
}

/// The canonical 36 slots in index order.
pub fn canonical_layout() -> Vec<SlotInfo> {
    let mut slots: Vec<SlotInfo> = EventId::ALL
        .into_iter()
        .flat_map(|e| {
            e.selectors()
                .into_iter()
                .map(move |s| SlotInfo { event: e, selector: s })
        })
        .collect();
    slots.sort_by_key(|s| s.event.slot(s.selector).expect("valid selector"));
    slots
}

pub fn slot_labels() -> Vec<String> {
    canonical_layout().iter().map(SlotInfo::label).collect()
}

/// Event indicators for one window and one media direction. Slots 0..36
/// follow the canonical layout; compiled plans may append further slots.
/// `onsets`, when present, holds the first-satisfying timestamp per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub bits: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub onsets: Vec<Option<Timestamp>>,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        FeatureVector {
            bits: vec![false; len],
            onsets: Vec::new(),
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        FeatureVector {
            bits,
            onsets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, slot: usize) -> bool {
        self.bits.get(slot).copied().unwrap_or(false)
    }

    pub fn onset(&self, slot: usize) -> Option<Timestamp> {
        self.onsets.get(slot).copied().flatten()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<bool>>>()
            .map(Self::from_bits)
    }
}

fn series<T>(items: &[&T], ts: impl Fn(&T) -> Timestamp, v: impl Fn(&T) -> f64) -> Vec<(Timestamp, f64)> {
    items.iter().map(|x| (ts(x), v(x))).collect()
}

/// Evaluates one event condition; returns the onset when it holds.
///
/// For the packet events the selector is the media direction under
/// analysis: forward delay uses media packets in that direction, reverse
/// delay uses RTCP packets travelling the opposite way.
pub fn detect_onset(
    view: &WindowView<'_>,
    id: EventId,
    sel: Selector,
    cfg: &DetectorConfig,
) -> Result<Option<Timestamp>> {
    use EventId::*;
    let bad = || DominoError::Usage(format!("{} cannot be evaluated with selector {sel:?}", id.name()));
    let onset = match id.family() {
        Family::App => {
            let Selector::Side(side) = sel else {
                return Err(bad());
            };
            let app = select::app_side(view, side);
            let ts = |a: &crate::trace::AppRecord| a.ts;
            match id {
                A1InFpsDrop => cond::peak_then_dip(&series(&app, ts, |a| a.in_fps), cfg.fps_hi, cfg.fps_lo),
                A2OutFpsDrop => cond::peak_then_dip(&series(&app, ts, |a| a.out_fps), cfg.fps_hi, cfg.fps_lo),
                A3OutResDrop => cond::adjacent_drop(&series(&app, ts, |a| a.out_res_height as f64)),
                A4JbDrain => cond::first_where(&series(&app, ts, |a| a.jitter_buffer_ms), |v| v == 0.0),
                A5TargetDrop => cond::adjacent_drop(&series(&app, ts, |a| a.target_bitrate_bps)),
                A6GccOveruse => app
                    .iter()
                    .find(|a| a.gcc_state == crate::trace::GccState::Overuse)
                    .map(|a| a.ts),
                A7PushbackDrop => cond::adjacent_drop(&series(&app, ts, |a| a.pushback_rate_bps)),
                A8CwndFull => cond::first_where(
                    &series(&app, ts, |a| a.outstanding_bytes as f64 / a.cwnd_bytes as f64),
                    |v| v > 1.0,
                ),
                A9OutstandingUp => cond::trend_up(
                    &series(&app, ts, |a| a.outstanding_bytes as f64),
                    cfg.trend_bucket_len(),
                ),
                A10PushbackNeqTarget => app
                    .iter()
                    .find(|a| a.target_bitrate_bps != a.pushback_rate_bps)
                    .map(|a| a.ts),
                _ => unreachable!("app family"),
            }
        }
        Family::Packet => {
            let Selector::Dir(media_dir) = sel else {
                return Err(bad());
            };
            let (kind, dir) = match id {
                N11FwdDelayUp => (PacketKind::Media, media_dir),
                N12RevDelayUp => (PacketKind::Rtcp, media_dir.opposite()),
                _ => unreachable!("packet family"),
            };
            let pk = select::packets(view, kind, Some(dir));
            cond::trend_up_above(
                &series(&pk, |p| p.send_ts, |p| p.one_way_delay_ms()),
                cfg.trend_bucket_len(),
                cfg.delay_hi_ms,
            )
        }
        Family::Ran => {
            let Selector::Dir(dir) = sel else {
                return Err(bad());
            };
            let own = select::own_ran(view, Some(dir));
            let ts = |r: &crate::trace::RanRecord| r.ts;
            match id {
                R13TbsDrop => cond::ratio_drop(&series(&own, ts, |r| r.tbs_bits as f64), cfg.tbs_drop_ratio),
                R14RateGap => {
                    let app = select::app_side(view, dir.sender());
                    let gap = select::rate_gap_series(&own, &app);
                    let s: Vec<(Timestamp, f64)> = own.iter().map(|r| r.ts).zip(gap).collect();
                    cond::positive_fraction_above(&s, cfg.rate_gap_frac)
                }
                R15CrossTraffic => {
                    let cell = select::cell_ran(view, Some(dir));
                    let other: u64 = cell.iter().filter(|r| !r.is_own_ue).map(|r| r.prb as u64).sum();
                    let mine: u64 = cell.iter().filter(|r| r.is_own_ue).map(|r| r.prb as u64).sum();
                    if !cell.is_empty() && other as f64 > cfg.cross_traffic_frac * mine as f64 {
                        cell.iter()
                            .find(|r| !r.is_own_ue && r.prb > 0)
                            .or(cell.first())
                            .map(|r| r.ts)
                    } else {
                        None
                    }
                }
                R16ChannelDegraded => cond::degraded_buckets(
                    &series(&own, ts, |r| r.mcs as f64),
                    view.window.start,
                    cfg.mcs_bucket_us(),
                    cfg.mcs_hi,
                    cfg.mcs_lo,
                    cfg.mcs_lo_count,
                ),
                R17HarqRetx => {
                    let flags: Vec<(Timestamp, bool)> = own.iter().map(|r| (r.ts, r.harq_retx)).collect();
                    cond::count_above(&flags, cfg.harq_count)
                }
                R18RlcRetx => own.iter().find(|r| r.rlc_retx).map(|r| r.ts),
                _ => unreachable!("ran family"),
            }
        }
        Family::Single => {
            if sel != Selector::None {
                return Err(bad());
            }
            match id {
                S19UlScheduling => select::own_ran(view, Some(Direction::Ul)).first().map(|r| r.ts),
                S20RrcChange => select::own_ran(view, None)
                    .windows(2)
                    .find(|w| w[1].rnti != w[0].rnti)
                    .map(|w| w[1].ts),
                _ => unreachable!("single family"),
            }
        }
    };
    Ok(onset)
}

pub fn detect(view: &WindowView<'_>, id: EventId, sel: Selector, cfg: &DetectorConfig) -> Result<bool> {
    detect_onset(view, id, sel, cfg).map(|o| o.is_some())
}

/// Fills all 36 slots for a window, analysing the media stream in
/// `media_dir`.
pub fn featurize_view(view: &WindowView<'_>, media_dir: Direction, cfg: &DetectorConfig) -> FeatureVector {
    let mut onsets = vec![None; FEATURE_LEN];
    for slot in canonical_layout() {
        let sel = match slot.event.family() {
            Family::Packet => Selector::Dir(media_dir),
            _ => slot.selector,
        };
        let idx = slot.event.slot(slot.selector).expect("canonical slot");
        onsets[idx] = detect_onset(view, slot.event, sel, cfg).expect("canonical selector");
    }
    FeatureVector {
        bits: onsets.iter().map(Option::is_some).collect(),
        onsets,
    }
}

pub fn featurize(trace: &Trace, window: &Window, media_dir: Direction, cfg: &DetectorConfig) -> FeatureVector {
    featurize_view(&slice(trace, window), media_dir, cfg)
}

/// Sliding windows over a trace: from its first timestamp up to
/// `end - length`, stepped by `step_s`. A trace shorter than one window
/// yields a single window covering it and a warning.
pub fn plan_windows(trace: &Trace, length_s: f64, step_s: f64) -> Result<(Vec<Window>, Option<String>)> {
    let (start, end) = trace
        .span()
        .ok_or_else(|| DominoError::InvalidArgument("trace is empty".into()))?;
    let first = Window::new(start, length_s)?;
    if !(step_s > 0.0 && step_s.is_finite()) {
        return Err(DominoError::InvalidArgument(format!(
            "step must be positive, got {step_s}"
        )));
    }
    let span_us = end.micros() - start.micros();
    let w_us = first.length_us();
    if span_us < w_us {
        let short = Window::new(start, (span_us.max(1)) as f64 / 1e6)?;
        let msg = format!(
            "trace spans {:.3} s, shorter than the {length_s} s window; using one short window",
            span_us as f64 / 1e6
        );
        log::warn!("{msg}");
        // Extend by one microsecond so the last record is inside the half-open window.
        let short = Window {
            length_s: short.length_s + 1e-6,
            ..short
        };
        return Ok((vec![short], Some(msg)));
    }
    let step_us = (step_s * 1e6).round() as u64;
    let count = (span_us - w_us) / step_us + 1;
    let windows = (0..count)
        .map(|i| Window {
            start: Timestamp::from_micros(start.micros() + i * step_us),
            length_s,
        })
        .collect();
    Ok((windows, None))
}

/// Feature vectors for every sliding window, in window order. Windows are
/// evaluated on the current rayon pool.
pub fn featurize_all(
    trace: &Trace,
    media_dir: Direction,
    length_s: f64,
    step_s: f64,
    cfg: &DetectorConfig,
) -> Result<Vec<(Window, FeatureVector)>> {
    let (windows, _) = plan_windows(trace, length_s, step_s)?;
    Ok(windows
        .into_par_iter()
        .map(|w| {
            let fv = featurize(trace, &w, media_dir, cfg);
            (w, fv)
        })
        .collect())
}
