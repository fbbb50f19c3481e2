//! Cross-layer telemetry model: RAN scheduling records, packet records and
//! application statistics sharing one clock, plus the sliding-window view.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::DominoError;

/// Microseconds since the trace epoch. Non-negative, totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Timestamp((ms * 1000.0).round().max(0.0) as u64)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e6).round().max(0.0) as u64)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    /// Applies a signed offset; `None` if the result would be negative.
    pub fn checked_offset(self, offset_us: i64) -> Option<Self> {
        let v = self.0 as i128 + offset_us as i128;
        if v < 0 || v > u64::MAX as i128 {
            None
        } else {
            Some(Timestamp(v as u64))
        }
    }

    pub fn saturating_add_micros(self, us: u64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ul,
    Dl,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Ul, Direction::Dl];

    pub fn opposite(self) -> Self {
        match self {
            Direction::Ul => Direction::Dl,
            Direction::Dl => Direction::Ul,
        }
    }

    /// Side that originates media flowing in this direction. The local
    /// client is the one attached to the 5G cell.
    pub fn sender(self) -> Side {
        match self {
            Direction::Ul => Side::Local,
            Direction::Dl => Side::Remote,
        }
    }

    pub fn receiver(self) -> Side {
        self.sender().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Ul => "ul",
            Direction::Dl => "dl",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ul" => Ok(Direction::Ul),
            "dl" => Ok(Direction::Dl),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Local,
    Remote,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Local, Side::Remote];

    pub fn other(self) -> Self {
        match self {
            Side::Local => Side::Remote,
            Side::Remote => Side::Local,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Local => "local",
            Side::Remote => "remote",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "local" => Ok(Side::Local),
            "remote" => Ok(Side::Remote),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketKind {
    Media,
    Rtcp,
}

impl PacketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::Media => "media",
            PacketKind::Rtcp => "rtcp",
        }
    }
}

impl FromStr for PacketKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "media" => Ok(PacketKind::Media),
            "rtcp" => Ok(PacketKind::Rtcp),
            other => Err(format!("unknown packet kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GccState {
    Normal,
    Overuse,
    Underuse,
}

impl GccState {
    pub fn as_str(self) -> &'static str {
        match self {
            GccState::Normal => "normal",
            GccState::Overuse => "overuse",
            GccState::Underuse => "underuse",
        }
    }
}

impl FromStr for GccState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(GccState::Normal),
            "overuse" => Ok(GccState::Overuse),
            "underuse" => Ok(GccState::Underuse),
            other => Err(format!("unknown gcc state `{other}`")),
        }
    }
}

/// One scheduling decision (a transport block) seen in the RAN logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RanRecord {
    pub ts: Timestamp,
    pub dir: Direction,
    pub rnti: u32,
    pub prb: u32,
    /// 0..=28
    pub mcs: u8,
    /// Zero for an unused grant.
    pub tbs_bits: u64,
    pub is_own_ue: bool,
    pub harq_retx: bool,
    pub rlc_retx: bool,
    pub proactive_grant: bool,
}

pub const MCS_MAX: u8 = 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub send_ts: Timestamp,
    pub recv_ts: Timestamp,
    pub dir: Direction,
    pub size_bytes: u32,
    pub kind: PacketKind,
}

impl PacketRecord {
    pub fn one_way_delay_us(&self) -> u64 {
        self.recv_ts.micros() - self.send_ts.micros()
    }

    pub fn one_way_delay_ms(&self) -> f64 {
        self.one_way_delay_us() as f64 / 1000.0
    }
}

/// Application-level statistics logged by one client (50 ms cadence in the
/// instrumented client).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub ts: Timestamp,
    pub side: Side,
    pub in_fps: f64,
    pub out_fps: f64,
    pub out_res_height: u32,
    pub jitter_buffer_ms: f64,
    pub target_bitrate_bps: f64,
    pub pushback_rate_bps: f64,
    pub gcc_state: GccState,
    pub outstanding_bytes: u64,
    pub cwnd_bytes: u64,
    pub app_send_rate_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplexing {
    #[default]
    Fdd,
    Tdd,
}

impl FromStr for Duplexing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fdd" => Ok(Duplexing::Fdd),
            "tdd" => Ok(Duplexing::Tdd),
            other => Err(format!("unknown duplexing `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub cell: String,
    pub duplexing: Duplexing,
    pub bandwidth_mhz: f64,
}

/// A call's worth of telemetry. Every stream is sorted by its primary
/// timestamp (`ts`, or `send_ts` for packets).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub ran: Vec<RanRecord>,
    pub packets: Vec<PacketRecord>,
    pub app: Vec<AppRecord>,
    pub meta: TraceMeta,
}

impl Trace {
    /// Sorts every stream by primary timestamp. Stable, so equal timestamps
    /// keep their input order.
    pub fn sort_streams(&mut self) {
        self.ran.sort_by_key(|r| r.ts);
        self.packets.sort_by_key(|p| p.send_ts);
        self.app.sort_by_key(|a| a.ts);
    }

    pub fn is_sorted(&self) -> bool {
        self.ran.windows(2).all(|w| w[0].ts <= w[1].ts)
            && self.packets.windows(2).all(|w| w[0].send_ts <= w[1].send_ts)
            && self.app.windows(2).all(|w| w[0].ts <= w[1].ts)
    }

    pub fn is_empty(&self) -> bool {
        self.ran.is_empty() && self.packets.is_empty() && self.app.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.ran.len() + self.packets.len() + self.app.len()
    }

    /// Earliest and latest primary timestamp over all streams.
    pub fn span(&self) -> Option<(Timestamp, Timestamp)> {
        let firsts = [
            self.ran.first().map(|r| r.ts),
            self.packets.first().map(|p| p.send_ts),
            self.app.first().map(|a| a.ts),
        ];
        let lasts = [
            self.ran.last().map(|r| r.ts),
            self.packets.last().map(|p| p.send_ts),
            self.app.last().map(|a| a.ts),
        ];
        let start = firsts.into_iter().flatten().min()?;
        let end = lasts.into_iter().flatten().max()?;
        Some((start, end))
    }
}

/// Half-open interval `[start, start + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub length_s: f64,
}

pub const DEFAULT_WINDOW_S: f64 = 5.0;
pub const DEFAULT_STEP_S: f64 = 0.5;

impl Window {
    pub fn new(start: Timestamp, length_s: f64) -> Result<Self, DominoError> {
        if !(length_s > 0.0 && length_s.is_finite()) {
            return Err(DominoError::InvalidArgument(format!(
                "window length must be positive, got {length_s}"
            )));
        }
        Ok(Window { start, length_s })
    }

    pub fn length_us(&self) -> u64 {
        (self.length_s * 1e6).round() as u64
    }

    pub fn end(&self) -> Timestamp {
        self.start.saturating_add_micros(self.length_us())
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        ts >= self.start && ts < self.end()
    }

    /// Moves the window start forward by `step_s`, keeping its length.
    pub fn advance(&self, step_s: f64) -> Result<Self, DominoError> {
        if !(step_s > 0.0 && step_s.is_finite()) {
            return Err(DominoError::InvalidArgument(format!(
                "step must be positive, got {step_s}"
            )));
        }
        Ok(Window {
            start: self.start.saturating_add_micros((step_s * 1e6).round() as u64),
            length_s: self.length_s,
        })
    }
}

/// Per-stream sub-slices of a trace falling inside one window.
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    pub window: Window,
    pub ran: &'a [RanRecord],
    pub packets: &'a [PacketRecord],
    pub app: &'a [AppRecord],
}

impl<'a> WindowView<'a> {
    pub fn is_empty(&self) -> bool {
        self.ran.is_empty() && self.packets.is_empty() && self.app.is_empty()
    }
}

fn range_by<T>(items: &[T], window: &Window, key: impl Fn(&T) -> Timestamp) -> (usize, usize) {
    let start = window.start;
    let end = window.end();
    let lo = items.partition_point(|x| key(x) < start);
    let hi = items.partition_point(|x| key(x) < end);
    (lo, hi.max(lo))
}

/// Records whose timestamp lies in `[start, start + W)`. Packets are keyed on
/// their send timestamp.
pub fn slice<'a>(trace: &'a Trace, window: &Window) -> WindowView<'a> {
    let (a, b) = range_by(&trace.ran, window, |r| r.ts);
    let (c, d) = range_by(&trace.packets, window, |p| p.send_ts);
    let (e, f) = range_by(&trace.app, window, |r| r.ts);
    WindowView {
        window: *window,
        ran: &trace.ran[a..b],
        packets: &trace.packets[c..d],
        app: &trace.app[e..f],
    }
}

/// Bucketing rule for [`bucket_mean`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bucket {
    /// Consecutive groups of N samples; a trailing partial group is dropped.
    Count(usize),
    /// Fixed time bins of this many microseconds, counted from `origin`.
    /// Empty bins are skipped.
    Duration { origin: Timestamp, width_us: u64 },
}

/// Averages a series per bucket.
pub fn bucket_mean(series: &[(Timestamp, f64)], bucket: Bucket) -> Vec<f64> {
    match bucket {
        Bucket::Count(n) => {
            if n == 0 {
                return Vec::new();
            }
            series
                .chunks_exact(n)
                .map(|c| c.iter().map(|(_, v)| v).sum::<f64>() / n as f64)
                .collect()
        }
        Bucket::Duration { origin, width_us } => group_by_duration(series, origin, width_us)
            .into_iter()
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
            .collect(),
    }
}

/// Groups values into fixed-width time bins starting at `origin`, keeping
/// only non-empty bins in time order. Samples before `origin` are ignored.
pub fn group_by_duration(series: &[(Timestamp, f64)], origin: Timestamp, width_us: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    if width_us == 0 {
        return out;
    }
    let mut current: Option<u64> = None;
    for &(ts, v) in series {
        if ts < origin {
            continue;
        }
        let bin = (ts.micros() - origin.micros()) / width_us;
        if current != Some(bin) {
            out.push(Vec::new());
            current = Some(bin);
        }
        out.last_mut().expect("bin pushed").push(v);
    }
    out
}
