//! Scenario scripts: `key = value` lines plus one `event = KIND k=v ...` line
//! per injected event. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DominoError, Result};
use crate::trace::{Direction, Duplexing};

use super::gcc::GccConfig;
use super::jitter::JitterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    PoorChannel,
    CrossTraffic,
    HarqStorm,
    RlcRetx,
    RrcTransition,
    None,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::PoorChannel,
        EventKind::CrossTraffic,
        EventKind::HarqStorm,
        EventKind::RlcRetx,
        EventKind::RrcTransition,
        EventKind::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PoorChannel => "POOR_CHANNEL",
            EventKind::CrossTraffic => "CROSS_TRAFFIC",
            EventKind::HarqStorm => "HARQ_STORM",
            EventKind::RlcRetx => "RLC_RETX",
            EventKind::RrcTransition => "RRC_TRANSITION",
            EventKind::None => "NONE",
        }
    }

    /// Cause node in the default graph that this kind exercises.
    pub fn cause(self) -> Option<&'static str> {
        match self {
            EventKind::PoorChannel => Some("poor_channel"),
            EventKind::CrossTraffic => Some("cross_traffic"),
            EventKind::HarqStorm => Some("harq_retx"),
            EventKind::RlcRetx => Some("rlc_retx"),
            EventKind::RrcTransition => Some("rrc_state"),
            EventKind::None => None,
        }
    }

    /// Parameter names and defaults accepted on an event line.
    pub fn param_defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            EventKind::PoorChannel => &[("mcs_start", 18.0), ("mcs_min", 5.0), ("ramp_s", 2.0), ("prb_min", 4.0)],
            EventKind::CrossTraffic => &[("other_prb", 38.0)],
            EventKind::HarqStorm => &[("bler", 0.95), ("max_rounds", 3.0)],
            EventKind::RlcRetx => &[("interval_ms", 400.0)],
            EventKind::RrcTransition | EventKind::None => &[],
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = DominoError;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DominoError::Scenario(format!("unknown event kind `{s}`")))
    }
}

/// Which consequence an injected event is expected to surface through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    /// Forward delay on the event's direction drains the receiver's buffer.
    Jb,
    /// Forward delay on the event's direction trips the sender's estimator.
    Target,
    /// Feedback for the opposite media direction is delayed, filling the
    /// congestion window.
    Pushback,
}

impl Routing {
    pub const ALL: [Routing; 3] = [Routing::Jb, Routing::Target, Routing::Pushback];

    pub fn as_str(self) -> &'static str {
        match self {
            Routing::Jb => "jb",
            Routing::Target => "target",
            Routing::Pushback => "pushback",
        }
    }

    pub fn consequence(self) -> &'static str {
        match self {
            Routing::Jb => "jb_drain",
            Routing::Target => "target_bitrate_drop",
            Routing::Pushback => "pushback_rate_drop",
        }
    }

    /// Media direction whose chain is expected for an event on `event_dir`.
    pub fn media_dir(self, event_dir: Direction) -> Direction {
        match self {
            Routing::Pushback => event_dir.opposite(),
            _ => event_dir,
        }
    }
}

impl FromStr for Routing {
    type Err = DominoError;

    fn from_str(s: &str) -> Result<Self> {
        Routing::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| DominoError::Scenario(format!("unknown route `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub kind: EventKind,
    pub start_s: f64,
    pub duration_s: f64,
    pub dir: Direction,
    pub route: Routing,
    pub params: BTreeMap<String, f64>,
}

impl InjectedEvent {
    pub fn new(kind: EventKind, start_s: f64, duration_s: f64, dir: Direction) -> Self {
        InjectedEvent {
            kind,
            start_s,
            duration_s,
            dir,
            route: Routing::Jb,
            params: kind.param_defaults().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn with_route(mut self, route: Routing) -> Self {
        self.route = route;
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or_else(|| {
            self.kind
                .param_defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or(0.0)
        })
    }

    pub fn contains(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.end_s()
    }

    fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split_whitespace();
        let kind: EventKind = parts
            .next()
            .ok_or_else(|| DominoError::Scenario("event needs a kind".into()))?
            .parse()?;
        let mut ev = InjectedEvent::new(kind, f64::NAN, f64::NAN, Direction::Ul);
        for part in parts {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| DominoError::Scenario(format!("expected key=value, got `{part}`")))?;
            match k {
                "start" => ev.start_s = number(k, v)?,
                "duration" => ev.duration_s = number(k, v)?,
                "dir" => ev.dir = v.parse().map_err(|e: String| DominoError::Scenario(e))?,
                "route" => ev.route = v.parse()?,
                _ if kind.param_defaults().iter().any(|(p, _)| *p == k) => {
                    ev.params.insert(k.to_string(), number(k, v)?);
                }
                _ => return Err(DominoError::Scenario(format!("{kind} has no parameter `{k}`"))),
            }
        }
        if ev.start_s.is_nan() || ev.duration_s.is_nan() {
            return Err(DominoError::Scenario(format!("{kind} needs start= and duration=")));
        }
        Ok(ev)
    }
}

impl fmt::Display for InjectedEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} start={} duration={} dir={} route={}",
            self.kind,
            self.start_s,
            self.duration_s,
            self.dir,
            self.route.as_str()
        )?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

fn number(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| DominoError::Scenario(format!("`{key}`: `{v}` is not a number")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(DominoError::Scenario(format!("`{key}`: `{v}` is not a boolean"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProfile {
    pub duplexing: Duplexing,
    pub bandwidth_mhz: f64,
    pub slot_ms: f64,
    /// Repeating slot mask for TDD: `D` downlink, `U` uplink, `S` neither.
    pub tdd_pattern: String,
    pub prb_total: u32,
    pub max_prb_own: u32,
    pub mcs_baseline: f64,
    pub ul_sched_min_ms: f64,
    pub ul_sched_max_ms: f64,
    pub harq_rtt_ms: f64,
    /// HARQ attempts before the RLC layer takes over.
    pub harq_max_attempts: u32,
    pub rlc_penalty_ms: f64,
    pub rrc_blackout_ms: f64,
    pub rrc_setup_ms: f64,
    pub proactive_grants: bool,
    pub proactive_interval_ms: f64,
    /// Per-slot probability of a small grant to some other UE.
    pub background_prob: f64,
}

impl Default for CellProfile {
    fn default() -> Self {
        CellProfile {
            duplexing: Duplexing::Fdd,
            bandwidth_mhz: 20.0,
            slot_ms: 1.0,
            tdd_pattern: "DDDSU".into(),
            prb_total: 40,
            max_prb_own: 6,
            mcs_baseline: 22.0,
            ul_sched_min_ms: 5.0,
            ul_sched_max_ms: 25.0,
            harq_rtt_ms: 10.0,
            harq_max_attempts: 4,
            rlc_penalty_ms: 105.0,
            rrc_blackout_ms: 300.0,
            rrc_setup_ms: 60.0,
            proactive_grants: false,
            proactive_interval_ms: 10.0,
            background_prob: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaProfile {
    pub max_bitrate_bps: f64,
    pub min_bitrate_bps: f64,
    pub fps: f64,
    pub packet_bytes: u32,
    pub rtcp_interval_ms: f64,
    pub rtcp_bytes: u32,
}

impl Default for MediaProfile {
    fn default() -> Self {
        MediaProfile {
            max_bitrate_bps: 2_000_000.0,
            min_bitrate_bps: 150_000.0,
            fps: 30.0,
            packet_bytes: 1200,
            rtcp_interval_ms: 50.0,
            rtcp_bytes: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    /// Core network one-way delay added to every packet.
    pub base_delay_ms: f64,
    /// Standard deviation of Gaussian jitter on the core delay.
    pub noise_ms: f64,
    pub cell: CellProfile,
    pub media: MediaProfile,
    pub gcc: GccConfig,
    pub jitter: JitterConfig,
    pub events: Vec<InjectedEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "baseline".into(),
            duration_s: 60.0,
            seed: 1,
            base_delay_ms: 30.0,
            noise_ms: 0.0,
            cell: CellProfile::default(),
            media: MediaProfile::default(),
            gcc: GccConfig::default(),
            jitter: JitterConfig::default(),
            events: Vec::new(),
        }
    }
}

macro_rules! kv_fields {
    ($key:ident, $val:ident; $($name:literal => $place:expr, $conv:ident;)*) => {
        match $key {
            $($name => { $place = $conv($key, $val)?; true })*
            _ => false,
        }
    };
}

fn num_u32(key: &str, v: &str) -> Result<u32> {
    let x = number(key, v)?;
    if x < 0.0 || x.fract() != 0.0 || x > u32::MAX as f64 {
        return Err(DominoError::Scenario(format!("`{key}` must be a whole number")));
    }
    Ok(x as u32)
}

fn num_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| DominoError::Scenario(format!("`{key}`: `{v}` is not a whole number")))
}

fn text(_key: &str, v: &str) -> Result<String> {
    Ok(v.to_string())
}

fn duplexing(key: &str, v: &str) -> Result<Duplexing> {
    v.parse()
        .map_err(|e: String| DominoError::Scenario(format!("`{key}`: {e}")))
}

impl Scenario {
    pub fn parse(src: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: DominoError| match e {
                DominoError::Scenario(m) => DominoError::Scenario(format!("line {}: {m}", i + 1)),
                other => other,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DominoError::Scenario(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "event" {
                sc.events.push(InjectedEvent::parse(v).map_err(at)?);
                continue;
            }
            sc.set(k, v).map_err(at)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        let c = &mut self.cell;
        let m = &mut self.media;
        let g = &mut self.gcc;
        let j = &mut self.jitter;
        let known = kv_fields!(k, v;
            "name" => self.name, text;
            "duration_s" => self.duration_s, number;
            "seed" => self.seed, num_u64;
            "base_delay_ms" => self.base_delay_ms, number;
            "noise_ms" => self.noise_ms, number;
            "duplexing" => c.duplexing, duplexing;
            "bandwidth_mhz" => c.bandwidth_mhz, number;
            "slot_ms" => c.slot_ms, number;
            "tdd_pattern" => c.tdd_pattern, text;
            "prb_total" => c.prb_total, num_u32;
            "max_prb_own" => c.max_prb_own, num_u32;
            "mcs_baseline" => c.mcs_baseline, number;
            "ul_sched_min_ms" => c.ul_sched_min_ms, number;
            "ul_sched_max_ms" => c.ul_sched_max_ms, number;
            "harq_rtt_ms" => c.harq_rtt_ms, number;
            "harq_max_attempts" => c.harq_max_attempts, num_u32;
            "rlc_penalty_ms" => c.rlc_penalty_ms, number;
            "rrc_blackout_ms" => c.rrc_blackout_ms, number;
            "rrc_setup_ms" => c.rrc_setup_ms, number;
            "proactive_grants" => c.proactive_grants, flag;
            "proactive_interval_ms" => c.proactive_interval_ms, number;
            "background_prob" => c.background_prob, number;
            "max_bitrate_bps" => m.max_bitrate_bps, number;
            "min_bitrate_bps" => m.min_bitrate_bps, number;
            "fps" => m.fps, number;
            "packet_bytes" => m.packet_bytes, num_u32;
            "rtcp_interval_ms" => m.rtcp_interval_ms, number;
            "rtcp_bytes" => m.rtcp_bytes, num_u32;
            "gcc.beta" => g.beta, number;
            "gcc.additive_bps_per_s" => g.additive_bps_per_s, number;
            "gcc.reaction_ms" => g.reaction_ms, number;
            "gcc.fast_recovery" => g.fast_recovery, flag;
            "gcc.fast_recovery_s" => g.fast_recovery_s, number;
            "gcc.trend_samples" => g.trend_samples, num_u32;
            "gcc.trend_gain" => g.trend_gain, number;
            "gcc.trend_smoothing" => g.trend_smoothing, number;
            "gcc.k_up" => g.k_up, number;
            "gcc.k_down" => g.k_down, number;
            "gcc.threshold_init" => g.threshold_init, number;
            "gcc.cwnd_margin_ms" => g.cwnd_margin_ms, number;
            "gcc.min_pushback_ratio" => g.min_pushback_ratio, number;
            "jitter.min_target_ms" => j.min_target_ms, number;
            "jitter.max_target_ms" => j.max_target_ms, number;
            "jitter.jitter_gain" => j.jitter_gain, number;
            "jitter.slow_speed" => j.slow_speed, number;
            "jitter.fast_speed" => j.fast_speed, number;
        );
        if known {
            Ok(())
        } else {
            Err(DominoError::Scenario(format!("unknown key `{k}`")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DominoError::Scenario(m));
        let c = &self.cell;
        if !(self.duration_s > 0.0) {
            return bad("duration_s must be positive".into());
        }
        if self.base_delay_ms < 0.0 || self.noise_ms < 0.0 {
            return bad("delays must be non-negative".into());
        }
        if !(c.slot_ms > 0.0) || (c.slot_ms * 1000.0).fract() != 0.0 {
            return bad("slot_ms must be a positive whole number of microseconds".into());
        }
        if c.duplexing == Duplexing::Tdd
            && (c.tdd_pattern.is_empty()
                || !c.tdd_pattern.chars().all(|ch| matches!(ch, 'D' | 'U' | 'S'))
                || !c.tdd_pattern.contains('D')
                || !c.tdd_pattern.contains('U'))
        {
            return bad(format!(
                "tdd_pattern `{}` needs D, U and S letters only, with at least one D and one U",
                c.tdd_pattern
            ));
        }
        if c.max_prb_own == 0 || c.max_prb_own > c.prb_total {
            return bad("max_prb_own must be in 1..=prb_total".into());
        }
        if !(0.0..=28.0).contains(&c.mcs_baseline) {
            return bad("mcs_baseline must be in 0..=28".into());
        }
        if !(c.ul_sched_min_ms > 0.0 && c.ul_sched_min_ms <= c.ul_sched_max_ms) {
            return bad("need 0 < ul_sched_min_ms <= ul_sched_max_ms".into());
        }
        if !(c.harq_rtt_ms > 0.0) || c.harq_max_attempts == 0 {
            return bad("harq_rtt_ms and harq_max_attempts must be positive".into());
        }
        if c.rlc_penalty_ms <= c.harq_rtt_ms * c.harq_max_attempts as f64 {
            return bad("rlc_penalty_ms must exceed the HARQ attempts it follows".into());
        }
        if !(c.rrc_blackout_ms > 0.0) || c.rrc_setup_ms < 0.0 || !(c.proactive_interval_ms > 0.0) {
            return bad("rrc and proactive timings must be positive".into());
        }
        if !(0.0..=1.0).contains(&c.background_prob) {
            return bad("background_prob must be in [0, 1]".into());
        }
        let m = &self.media;
        if !(m.fps > 0.0) || m.packet_bytes == 0 || !(m.rtcp_interval_ms > 0.0) {
            return bad("fps, packet_bytes and rtcp_interval_ms must be positive".into());
        }
        if !(m.min_bitrate_bps > 0.0 && m.min_bitrate_bps <= m.max_bitrate_bps) {
            return bad("need 0 < min_bitrate_bps <= max_bitrate_bps".into());
        }
        self.gcc.validate()?;
        self.jitter.validate()?;
        for ev in &self.events {
            if !(ev.start_s >= 0.0 && ev.duration_s > 0.0 && ev.end_s() <= self.duration_s) {
                return bad(format!(
                    "event `{ev}` must lie within the {} s scenario",
                    self.duration_s
                ));
            }
            self.validate_params(ev)?;
        }
        Ok(())
    }

    fn validate_params(&self, ev: &InjectedEvent) -> Result<()> {
        let bad = |m: &str| Err(DominoError::Scenario(format!("{}: {m}", ev.kind)));
        match ev.kind {
            EventKind::PoorChannel => {
                let (s, lo) = (ev.param("mcs_start"), ev.param("mcs_min"));
                if !(0.0..=28.0).contains(&s) || !(0.0..=s).contains(&lo) {
                    return bad("need 0 <= mcs_min <= mcs_start <= 28");
                }
                if ev.param("ramp_s") < 0.0 {
                    return bad("ramp_s must be non-negative");
                }
                let p = ev.param("prb_min");
                if !(p >= 1.0 && p <= self.cell.max_prb_own as f64) {
                    return bad("prb_min must be in 1..=max_prb_own");
                }
            }
            EventKind::CrossTraffic => {
                let p = ev.param("other_prb");
                if !(p >= 0.0 && p < self.cell.prb_total as f64) {
                    return bad("other_prb must leave at least one PRB");
                }
            }
            EventKind::HarqStorm => {
                if !(0.0..=1.0).contains(&ev.param("bler")) {
                    return bad("bler must be in [0, 1]");
                }
                let r = ev.param("max_rounds");
                if !(r >= 1.0 && r < self.cell.harq_max_attempts as f64) {
                    return bad("max_rounds must be at least 1 and below harq_max_attempts");
                }
            }
            EventKind::RlcRetx => {
                if !(ev.param("interval_ms") > 0.0) {
                    return bad("interval_ms must be positive");
                }
            }
            EventKind::RrcTransition => {
                let need = (self.cell.rrc_blackout_ms + self.cell.rrc_setup_ms) / 1000.0;
                if ev.duration_s < need {
                    return bad(&format!("duration must cover blackout and setup ({need} s)"));
                }
            }
            EventKind::None => {}
        }
        Ok(())
    }

    /// Canonical script text; parsing it yields an equal scenario.
    pub fn to_script(&self) -> String {
        let c = &self.cell;
        let m = &self.media;
        let g = &self.gcc;
        let j = &self.jitter;
        let dup = match c.duplexing {
            Duplexing::Fdd => "fdd",
            Duplexing::Tdd => "tdd",
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("name", self.name.clone());
        put("duration_s", self.duration_s.to_string());
        put("seed", self.seed.to_string());
        put("base_delay_ms", self.base_delay_ms.to_string());
        put("noise_ms", self.noise_ms.to_string());
        put("duplexing", dup.into());
        put("bandwidth_mhz", c.bandwidth_mhz.to_string());
        put("slot_ms", c.slot_ms.to_string());
        put("tdd_pattern", c.tdd_pattern.clone());
        put("prb_total", c.prb_total.to_string());
        put("max_prb_own", c.max_prb_own.to_string());
        put("mcs_baseline", c.mcs_baseline.to_string());
        put("ul_sched_min_ms", c.ul_sched_min_ms.to_string());
        put("ul_sched_max_ms", c.ul_sched_max_ms.to_string());
        put("harq_rtt_ms", c.harq_rtt_ms.to_string());
        put("harq_max_attempts", c.harq_max_attempts.to_string());
        put("rlc_penalty_ms", c.rlc_penalty_ms.to_string());
        put("rrc_blackout_ms", c.rrc_blackout_ms.to_string());
        put("rrc_setup_ms", c.rrc_setup_ms.to_string());
        put("proactive_grants", c.proactive_grants.to_string());
        put("proactive_interval_ms", c.proactive_interval_ms.to_string());
        put("background_prob", c.background_prob.to_string());
        put("max_bitrate_bps", m.max_bitrate_bps.to_string());
        put("min_bitrate_bps", m.min_bitrate_bps.to_string());
        put("fps", m.fps.to_string());
        put("packet_bytes", m.packet_bytes.to_string());
        put("rtcp_interval_ms", m.rtcp_interval_ms.to_string());
        put("rtcp_bytes", m.rtcp_bytes.to_string());
        put("gcc.beta", g.beta.to_string());
        put("gcc.additive_bps_per_s", g.additive_bps_per_s.to_string());
        put("gcc.reaction_ms", g.reaction_ms.to_string());
        put("gcc.fast_recovery", g.fast_recovery.to_string());
        put("gcc.fast_recovery_s", g.fast_recovery_s.to_string());
        put("gcc.trend_samples", g.trend_samples.to_string());
        put("gcc.trend_gain", g.trend_gain.to_string());
        put("gcc.trend_smoothing", g.trend_smoothing.to_string());
        put("gcc.k_up", g.k_up.to_string());
        put("gcc.k_down", g.k_down.to_string());
        put("gcc.threshold_init", g.threshold_init.to_string());
        put("gcc.cwnd_margin_ms", g.cwnd_margin_ms.to_string());
        put("gcc.min_pushback_ratio", g.min_pushback_ratio.to_string());
        put("jitter.min_target_ms", j.min_target_ms.to_string());
        put("jitter.max_target_ms", j.max_target_ms.to_string());
        put("jitter.jitter_gain", j.jitter_gain.to_string());
        put("jitter.slow_speed", j.slow_speed.to_string());
        put("jitter.fast_speed", j.fast_speed.to_string());
        for ev in &self.events {
            put("event", ev.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_events_and_keys() {
        let sc = Scenario::parse(
            "name = storm\nduration_s = 30\nseed = 7 # fixed\n\
             event = HARQ_STORM start=10 duration=4 dir=dl route=target bler=0.5\n\
             event = rrc_transition start=20 duration=1\n",
        )
        .unwrap();
        assert_eq!(sc.name, "storm");
        assert_eq!(sc.seed, 7);
        assert_eq!(sc.events.len(), 2);
        let e = &sc.events[0];
        assert_eq!(e.kind, EventKind::HarqStorm);
        assert_eq!(e.dir, Direction::Dl);
        assert_eq!(e.route, Routing::Target);
        assert_eq!(e.param("bler"), 0.5);
        assert_eq!(e.param("max_rounds"), 3.0);
        assert_eq!(sc.events[1].kind, EventKind::RrcTransition);
    }

    #[test]
    fn script_round_trip() {
        let mut sc = Scenario::default();
        sc.cell.proactive_grants = true;
        sc.gcc.fast_recovery = true;
        sc.events.push(
            InjectedEvent::new(EventKind::PoorChannel, 5.0, 8.0, Direction::Dl)
                .with_route(Routing::Pushback)
                .with_param("prb_min", 3.0),
        );
        assert_eq!(Scenario::parse(&sc.to_script()).unwrap(), sc);
    }

    #[test]
    fn rejects_invalid() {
        for (src, needle) in [
            ("duration_s = 10\nevent = NONE start=8 duration=5", "within"),
            ("bogus = 1", "unknown key"),
            ("event = FLOOD start=1 duration=1", "unknown event kind"),
            ("event = NONE start=1", "needs start"),
            ("event = HARQ_STORM start=1 duration=1 bler=2", "bler"),
            ("event = HARQ_STORM start=1 duration=1 max_rounds=4", "max_rounds"),
            ("event = CROSS_TRAFFIC start=1 duration=1 depth=3", "no parameter"),
            ("event = RRC_TRANSITION start=1 duration=0.2", "cover"),
            ("ul_sched_min_ms = 30", "ul_sched"),
            ("duplexing = tdd\ntdd_pattern = DDD", "tdd_pattern"),
            ("seed = x", "line 1"),
        ] {
            let err = Scenario::parse(src).unwrap_err().to_string();
            assert!(err.contains(needle), "{src}: {err}");
        }
    }
}
