//! Slot-stepped simulation of one two-party call whose local client sits on
//! a 5G cell. Both radio directions are modeled at grant granularity; the
//! remote client sits behind a fixed core delay.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::trace::{
    AppRecord, Direction, Duplexing, PacketKind, PacketRecord, RanRecord, Side, Timestamp, Trace, TraceMeta,
};

use super::gcc::{DelaySample, Feedback, GccModel};
use super::jitter::{FrameArrival, JitterBuffer};
use super::scenario::{EventKind, InjectedEvent, Scenario};

/// Simulated time before the trace starts, so that buffers and estimators
/// have settled by the first record.
pub(crate) const WARMUP_US: u64 = 2_000_000;
const DRAIN_US: u64 = 60_000_000;
const APP_INTERVAL_US: u64 = 50_000;
const FPS_HISTORY: usize = 20;
const RE_PER_PRB: f64 = 144.0;
const OWN_RNTI: u32 = 17_001;
const BACKGROUND_RNTIS: [u32; 3] = [21_001, 21_002, 21_003];
const CROSS_RNTI: u32 = 30_001;
const SIGNAL_INTERVAL_US: u64 = 5_000;
const MEDIA_PHASE_US: [u64; 2] = [0, 11_000];
const RTCP_PHASE_US: [u64; 2] = [23_000, 7_000];

/// Transport block size for a grant, from a linear spectral-efficiency fit.
pub fn tbs_bits(prb: u32, mcs: u8) -> u64 {
    (prb as f64 * RE_PER_PRB * (0.15 + 0.2 * mcs as f64)).floor() as u64
}

fn di(d: Direction) -> usize {
    match d {
        Direction::Ul => 0,
        Direction::Dl => 1,
    }
}

/// Generator-side counters, reported alongside the trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub media_frames: u64,
    pub media_packets: u64,
    pub rtcp_packets: u64,
    pub harq_retx: u64,
    pub rlc_retx: u64,
    pub proactive_grants: u64,
    pub proactive_wasted: u64,
    pub freezes: u64,
}

struct Pkt {
    send: u64,
    size: u32,
    dir: Direction,
    kind: PacketKind,
    frame: u32,
    core: u64,
    recv: Option<u64>,
    deliver: u64,
    pending_tbs: u16,
    assigned: bool,
}

struct Frame {
    send: u64,
    left: u32,
}

#[derive(Clone)]
struct Tb {
    prb: u32,
    mcs: u8,
    tbs: u64,
    pkts: Vec<usize>,
    failures_left: u32,
    rlc: bool,
    rlc_stage: bool,
    first_tx: u64,
}

struct Link {
    queue: VecDeque<(usize, u32)>,
    incoming: BinaryHeap<Reverse<(u64, usize)>>,
    grant_from: Option<u64>,
    retx: BTreeMap<(u64, u64), Tb>,
    seq: u64,
    hol: Option<(u64, u64)>,
    rlc_fired: Option<u64>,
}

impl Link {
    fn new() -> Self {
        Link {
            queue: VecDeque::new(),
            incoming: BinaryHeap::new(),
            grant_from: None,
            retx: BTreeMap::new(),
            seq: 0,
            hol: None,
            rlc_fired: None,
        }
    }

    fn idle(&self) -> bool {
        self.queue.is_empty() && self.incoming.is_empty() && self.retx.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Connected,
    Release,
    Blackout,
    Setup { first: bool },
    Resume,
}

struct RrcPlan {
    release: u64,
    blackout_end: u64,
    setup_end: u64,
}

/// An injected event in simulator time.
struct Active<'a> {
    ev: &'a InjectedEvent,
    start: u64,
    end: u64,
}

pub(crate) struct Sim<'a> {
    sc: &'a Scenario,
    slot_us: u64,
    end_gen: u64,
    rng: ChaCha8Rng,
    bg_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    events: Vec<Active<'a>>,
    rrc: Vec<RrcPlan>,
    rnti: u32,
    pkts: Vec<Pkt>,
    frames: Vec<Frame>,
    links: [Link; 2],
    deliveries: BinaryHeap<Reverse<(u64, usize)>>,
    gcc: [GccModel; 2],
    jb: [JitterBuffer; 2],
    fb_pending: [Vec<usize>; 2],
    rtcp_payload: HashMap<usize, Vec<usize>>,
    played: [f64; 2],
    played_hist: [VecDeque<f64>; 2],
    next_frame: [u64; 2],
    next_rtcp: [u64; 2],
    ran: Vec<RanRecord>,
    app: Vec<AppRecord>,
    stats: SynthStats,
}

impl<'a> Sim<'a> {
    pub(crate) fn new(sc: &'a Scenario) -> Self {
        let slot_us = (sc.cell.slot_ms * 1000.0).round() as u64;
        let at = |s: f64| WARMUP_US + (s * 1e6).round() as u64;
        let events: Vec<Active> = sc
            .events
            .iter()
            .map(|ev| Active {
                ev,
                start: at(ev.start_s),
                end: at(ev.end_s()),
            })
            .collect();
        let snap = |t: u64| t.div_ceil(slot_us) * slot_us;
        let blackout = (sc.cell.rrc_blackout_ms * 1000.0).round() as u64;
        let setup = (sc.cell.rrc_setup_ms * 1000.0).round() as u64;
        let rrc = events
            .iter()
            .filter(|a| a.ev.kind == EventKind::RrcTransition)
            .map(|a| {
                let release = snap(a.start);
                RrcPlan {
                    release,
                    blackout_end: release + blackout,
                    setup_end: release + blackout + setup,
                }
            })
            .collect();
        let m = &sc.media;
        let gcc = || GccModel::new(sc.gcc.clone(), m.max_bitrate_bps, m.min_bitrate_bps, m.max_bitrate_bps);
        let frame_ms = 1000.0 / m.fps;
        let jb = || JitterBuffer::new(sc.jitter.clone(), frame_ms);
        Sim {
            sc,
            slot_us,
            end_gen: at(sc.duration_s),
            rng: ChaCha8Rng::seed_from_u64(sc.seed),
            bg_rng: ChaCha8Rng::seed_from_u64(sc.seed ^ 0x5bd1_e995),
            noise_rng: ChaCha8Rng::seed_from_u64(sc.seed ^ 0x9e37_79b9_7f4a_7c15),
            noise: (sc.noise_ms > 0.0).then(|| Normal::new(0.0, sc.noise_ms).expect("finite sigma")),
            events,
            rrc,
            rnti: OWN_RNTI,
            pkts: Vec::new(),
            frames: Vec::new(),
            links: [Link::new(), Link::new()],
            deliveries: BinaryHeap::new(),
            gcc: [gcc(), gcc()],
            jb: [jb(), jb()],
            fb_pending: [Vec::new(), Vec::new()],
            rtcp_payload: HashMap::new(),
            played: [0.0; 2],
            played_hist: [VecDeque::new(), VecDeque::new()],
            next_frame: [0; 2],
            next_rtcp: [0; 2],
            ran: Vec::new(),
            app: Vec::new(),
            stats: SynthStats::default(),
        }
    }

    pub(crate) fn run(mut self) -> (Trace, SynthStats) {
        let mut t = 0;
        loop {
            let quiet = self.deliveries.is_empty() && self.links.iter().all(Link::idle);
            if t >= self.end_gen && (quiet || t >= self.end_gen + DRAIN_US) {
                break;
            }
            self.slot(t);
            t += self.slot_us;
        }
        self.finish()
    }

    fn in_trace(&self, t: u64) -> bool {
        t >= WARMUP_US && t < self.end_gen
    }

    fn active(&self, kind: EventKind, dir: Option<Direction>, t: u64) -> impl Iterator<Item = &Active<'a>> {
        self.events
            .iter()
            .filter(move |a| a.ev.kind == kind && dir.is_none_or(|d| a.ev.dir == d) && t >= a.start && t < a.end)
    }

    fn slot(&mut self, t: u64) {
        self.deliver(t);
        if t < self.end_gen {
            for d in Direction::BOTH {
                self.generate_media(d, t);
                self.generate_rtcp(d, t);
            }
        }
        let phase = self.rrc_phase(t);
        for d in Direction::BOTH {
            self.admit(d, t, phase);
        }
        for d in Direction::BOTH {
            self.radio(d, t, phase);
        }
        self.other_ues(t);
        for d in Direction::BOTH {
            let p = self.jb[di(d)].play(self.sc.cell.slot_ms);
            self.played[di(d)] += p.played_ms;
            if p.froze && self.in_trace(t) {
                self.stats.freezes += 1;
            }
        }
        if t.is_multiple_of(APP_INTERVAL_US) {
            self.sample_app(t);
        }
    }

    fn core_us(&mut self) -> u64 {
        let base = self.sc.base_delay_ms;
        let ms = match &self.noise {
            Some(n) => (base + n.sample(&mut self.noise_rng)).max(0.0),
            None => base,
        };
        (ms * 1000.0).round() as u64
    }

    fn send_packet(&mut self, send: u64, size: u32, dir: Direction, kind: PacketKind, frame: u32) -> usize {
        let core = self.core_us();
        let id = self.pkts.len();
        self.pkts.push(Pkt {
            send,
            size,
            dir,
            kind,
            frame,
            core,
            recv: None,
            deliver: 0,
            pending_tbs: 0,
            assigned: false,
        });
        let arrival = match dir {
            Direction::Ul => send,
            Direction::Dl => send + core,
        };
        self.links[di(dir)].incoming.push(Reverse((arrival, id)));
        if send >= WARMUP_US && send < self.end_gen {
            match kind {
                PacketKind::Media => self.stats.media_packets += 1,
                PacketKind::Rtcp => self.stats.rtcp_packets += 1,
            }
        }
        id
    }

    fn generate_media(&mut self, d: Direction, t: u64) {
        let m = &self.sc.media;
        let (fps, packet) = (m.fps, m.packet_bytes);
        loop {
            let k = self.next_frame[di(d)];
            let send = MEDIA_PHASE_US[di(d)] + (k as f64 * 1e6 / fps).round() as u64;
            if send > t {
                return;
            }
            self.next_frame[di(d)] += 1;
            let rate = self.gcc[di(d)].pushback_bps();
            let bytes = ((rate / 8.0 / fps).round() as u64).max(1);
            let n = bytes.div_ceil(packet as u64) as u32;
            let fid = self.frames.len() as u32;
            self.frames.push(Frame { send, left: n });
            if send >= WARMUP_US && send < self.end_gen {
                self.stats.media_frames += 1;
            }
            let mut left = bytes;
            for _ in 0..n {
                let size = left.min(packet as u64) as u32;
                left -= size as u64;
                self.gcc[di(d)].on_send(size as u64);
                self.send_packet(send, size, d, PacketKind::Media, fid);
            }
        }
    }

    /// Feedback for media flowing in `d`, sent by its receiver back along
    /// the opposite direction.
    fn generate_rtcp(&mut self, d: Direction, t: u64) {
        let interval = (self.sc.media.rtcp_interval_ms * 1000.0).round() as u64;
        loop {
            let send = RTCP_PHASE_US[di(d)] + self.next_rtcp[di(d)] * interval;
            if send > t {
                return;
            }
            self.next_rtcp[di(d)] += 1;
            let payload = std::mem::take(&mut self.fb_pending[di(d)]);
            let size = self.sc.media.rtcp_bytes;
            let id = self.send_packet(send, size, d.opposite(), PacketKind::Rtcp, u32::MAX);
            self.rtcp_payload.insert(id, payload);
        }
    }

    fn deliver(&mut self, t: u64) {
        while let Some(&Reverse((at, p))) = self.deliveries.peek() {
            if at > t {
                break;
            }
            self.deliveries.pop();
            self.pkts[p].recv = Some(at);
            let pk = &self.pkts[p];
            match pk.kind {
                PacketKind::Media => {
                    let d = pk.dir;
                    let f = &mut self.frames[pk.frame as usize];
                    f.left -= 1;
                    if f.left == 0 {
                        let send_ms = f.send as f64 / 1000.0;
                        self.jb[di(d)].push(FrameArrival {
                            send_ms,
                            recv_ms: at as f64 / 1000.0,
                        });
                    }
                    self.fb_pending[di(d)].push(p);
                }
                PacketKind::Rtcp => {
                    let media_dir = pk.dir.opposite();
                    let payload = self.rtcp_payload.remove(&p).unwrap_or_default();
                    self.feedback(media_dir, at, &payload);
                }
            }
        }
    }

    fn feedback(&mut self, media_dir: Direction, at: u64, payload: &[usize]) {
        let mut samples: Vec<DelaySample> = Vec::new();
        let mut last_frame = u32::MAX;
        let mut acked = 0u64;
        let mut newest_send = None;
        for &q in payload {
            let pk = &self.pkts[q];
            let recv_ms = pk.recv.expect("reported packets were delivered") as f64 / 1000.0;
            acked += pk.size as u64;
            newest_send = newest_send.max(Some(pk.send));
            if pk.frame == last_frame {
                let s = samples.last_mut().expect("same frame");
                s.recv_ms = s.recv_ms.max(recv_ms);
            } else {
                last_frame = pk.frame;
                samples.push(DelaySample {
                    send_ms: pk.send as f64 / 1000.0,
                    recv_ms,
                });
            }
        }
        let fb = Feedback {
            now_ms: at as f64 / 1000.0,
            samples,
            acked_bytes: acked,
            rtt_ms: newest_send.map(|s| (at - s) as f64 / 1000.0),
        };
        self.gcc[di(media_dir)].on_feedback(&fb);
    }

    fn rrc_phase(&self, t: u64) -> Phase {
        for p in &self.rrc {
            if t == p.release {
                return Phase::Release;
            }
            if t > p.release && t < p.blackout_end {
                return Phase::Blackout;
            }
            if t >= p.blackout_end && t < p.setup_end {
                return Phase::Setup {
                    first: t == p.blackout_end,
                };
            }
            if t == p.setup_end {
                return Phase::Resume;
            }
        }
        Phase::Connected
    }

    fn admit(&mut self, d: Direction, t: u64, phase: Phase) {
        let c = &self.sc.cell;
        let (lo, hi) = (c.ul_sched_min_ms, c.ul_sched_max_ms);
        let slot = self.slot_us;
        let connected = matches!(phase, Phase::Connected | Phase::Resume);
        let link = &mut self.links[di(d)];
        while let Some(&Reverse((at, p))) = link.incoming.peek() {
            if at > t {
                break;
            }
            link.incoming.pop();
            let was_empty = link.queue.is_empty();
            link.queue.push_back((p, self.pkts[p].size));
            if d == Direction::Ul && was_empty && link.grant_from.is_none() && connected {
                // Scheduling request: the first grant follows after a
                // random scheduler delay, snapped to a slot inside the range.
                let delay_ms = if hi > lo { self.rng.gen_range(lo..hi) } else { lo };
                let latest = at + (hi * 1000.0).round() as u64;
                let mut grant = (at + (delay_ms * 1000.0).round() as u64).div_ceil(slot) * slot;
                if grant > latest && grant >= slot {
                    grant -= slot;
                }
                link.grant_from = Some(grant);
            }
        }
        if phase == Phase::Resume && d == Direction::Ul && !link.queue.is_empty() {
            link.grant_from = Some(t);
        }
    }

    fn tdd_allows(&self, d: Direction, t: u64) -> bool {
        let c = &self.sc.cell;
        if c.duplexing == Duplexing::Fdd {
            return true;
        }
        let pat = c.tdd_pattern.as_bytes();
        let ch = pat[((t / self.slot_us) % pat.len() as u64) as usize];
        matches!((d, ch), (Direction::Dl, b'D') | (Direction::Ul, b'U'))
    }

    /// Mean MCS, own PRB cap and PRBs taken by cross traffic.
    fn channel(&self, d: Direction, t: u64) -> (f64, u32, u32) {
        let c = &self.sc.cell;
        let mut mcs = c.mcs_baseline;
        let mut cap = c.max_prb_own;
        let mut other = 0;
        for a in self.active(EventKind::PoorChannel, Some(d), t) {
            let ramp = a.ev.param("ramp_s") * 1e6;
            let frac = if ramp > 0.0 {
                ((t - a.start) as f64 / ramp).min(1.0)
            } else {
                1.0
            };
            let (s, lo) = (a.ev.param("mcs_start"), a.ev.param("mcs_min"));
            mcs = s + (lo - s) * frac;
            let pmin = a.ev.param("prb_min");
            cap = (c.max_prb_own as f64 + (pmin - c.max_prb_own as f64) * frac).round() as u32;
        }
        for a in self.active(EventKind::CrossTraffic, Some(d), t) {
            other = other.max(a.ev.param("other_prb") as u32);
        }
        (mcs, cap, other)
    }

    fn draw_mcs(&mut self, center: f64) -> u8 {
        let jitter: i32 = self.rng.gen_range(-1..=1);
        (center.round() as i32 + jitter).clamp(0, 28) as u8
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        t: u64,
        d: Direction,
        rnti: u32,
        prb: u32,
        mcs: u8,
        tbs: u64,
        own: bool,
        flags: (bool, bool, bool),
    ) {
        if !self.in_trace(t) {
            return;
        }
        self.ran.push(RanRecord {
            ts: Timestamp::from_micros(t - WARMUP_US),
            dir: d,
            rnti,
            prb,
            mcs,
            tbs_bits: tbs,
            is_own_ue: own,
            harq_retx: flags.0,
            rlc_retx: flags.1,
            proactive_grant: flags.2,
        });
    }

    fn radio(&mut self, d: Direction, t: u64, phase: Phase) {
        if !self.tdd_allows(d, t) {
            return;
        }
        let baseline = self.sc.cell.mcs_baseline.round() as u8;
        match phase {
            Phase::Release => {
                self.links[di(Direction::Ul)].grant_from = None;
                if d == Direction::Dl {
                    let rnti = self.rnti;
                    self.emit(
                        t,
                        d,
                        rnti,
                        1,
                        baseline,
                        tbs_bits(1, baseline),
                        true,
                        (false, false, false),
                    );
                }
                return;
            }
            Phase::Blackout => return,
            Phase::Setup { first } => {
                if first {
                    self.rnti += 1;
                }
                let since = t - self
                    .rrc
                    .iter()
                    .find(|p| t >= p.blackout_end && t < p.setup_end)
                    .map_or(t, |p| p.blackout_end);
                if since.is_multiple_of(SIGNAL_INTERVAL_US) {
                    let rnti = self.rnti;
                    self.emit(
                        t,
                        d,
                        rnti,
                        2,
                        baseline,
                        tbs_bits(2, baseline),
                        true,
                        (false, false, false),
                    );
                }
                return;
            }
            Phase::Connected | Phase::Resume => {}
        }
        let (center, cap, other) = self.channel(d, t);
        let total = self.sc.cell.prb_total;
        let mut budget = cap.min(total.saturating_sub(other));
        let harq_rtt = (self.sc.cell.harq_rtt_ms * 1000.0).round() as u64;
        let rlc_penalty = (self.sc.cell.rlc_penalty_ms * 1000.0).round() as u64;

        // Retransmissions due now take precedence over new data.
        loop {
            let link = &mut self.links[di(d)];
            let Some((&key, tb)) = link.retx.iter().next() else {
                break;
            };
            if key.0 > t || tb.prb > budget {
                break;
            }
            let tb = link.retx.remove(&key).expect("present");
            budget -= tb.prb;
            let rlc_tx = tb.rlc_stage;
            let rnti = self.rnti;
            if rlc_tx {
                if self.in_trace(t) {
                    self.stats.rlc_retx += 1;
                }
            } else if self.in_trace(t) {
                self.stats.harq_retx += 1;
            }
            self.emit(t, d, rnti, tb.prb, tb.mcs, tb.tbs, true, (!rlc_tx, rlc_tx, false));
            self.attempt(d, t, tb, harq_rtt, rlc_penalty);
        }

        let proactive_slot = d == Direction::Ul
            && self.sc.cell.proactive_grants
            && t.is_multiple_of(((self.sc.cell.proactive_interval_ms * 1000.0).round() as u64).max(1));
        let link = &self.links[di(d)];
        let granted = match d {
            Direction::Dl => true,
            Direction::Ul => link.grant_from.is_some_and(|g| g <= t),
        };
        let proactive = proactive_slot && !granted;
        if budget == 0 || !(granted || proactive) {
            return;
        }
        if link.queue.is_empty() && !proactive {
            return;
        }
        let mcs = self.draw_mcs(center);
        let prb = budget;
        let tbs = tbs_bits(prb, mcs);
        let rnti = self.rnti;
        if proactive && self.in_trace(t) {
            self.stats.proactive_grants += 1;
        }
        if self.links[di(d)].queue.is_empty() {
            if self.in_trace(t) {
                self.stats.proactive_wasted += 1;
            }
            self.emit(t, d, rnti, prb, mcs, tbs, true, (false, false, true));
            return;
        }
        let mut tb = Tb {
            prb,
            mcs,
            tbs,
            pkts: Vec::new(),
            failures_left: 0,
            rlc: false,
            rlc_stage: false,
            first_tx: t,
        };
        let mut room = tbs / 8;
        let link = &mut self.links[di(d)];
        while room > 0 {
            let Some(front) = link.queue.front_mut() else {
                break;
            };
            let take = (front.1 as u64).min(room) as u32;
            let p = front.0;
            front.1 -= take;
            room -= take as u64;
            self.pkts[p].pending_tbs += 1;
            tb.pkts.push(p);
            if front.1 == 0 {
                self.pkts[p].assigned = true;
                link.queue.pop_front();
            }
        }
        if link.queue.is_empty() && d == Direction::Ul {
            link.grant_from = None;
        } else if proactive {
            link.grant_from = Some(t);
        }
        self.decide_fate(d, t, &mut tb);
        self.emit(t, d, rnti, prb, mcs, tbs, true, (false, false, proactive));
        self.attempt(d, t, tb, harq_rtt, rlc_penalty);
    }

    fn decide_fate(&mut self, d: Direction, t: u64, tb: &mut Tb) {
        let mut rlc_due = None;
        for a in self.active(EventKind::RlcRetx, Some(d), t) {
            let every = (a.ev.param("interval_ms") * 1000.0).round().max(1.0) as u64;
            let instant = a.start + (t - a.start) / every * every;
            rlc_due = rlc_due.max(Some(instant));
        }
        let link = &mut self.links[di(d)];
        if let Some(instant) = rlc_due {
            if link.rlc_fired.is_none_or(|f| instant > f) {
                link.rlc_fired = Some(instant);
                tb.rlc = true;
                tb.failures_left = self.sc.cell.harq_max_attempts;
                let penalty = (self.sc.cell.rlc_penalty_ms * 1000.0).round() as u64;
                let until = t + penalty + self.slot_us;
                link.hol = Some((t, link.hol.map_or(until, |(_, u)| u.max(until))));
                return;
            }
        }
        let storm: Option<(f64, u32)> = self
            .active(EventKind::HarqStorm, Some(d), t)
            .map(|a| (a.ev.param("bler"), a.ev.param("max_rounds") as u32))
            .next();
        if let Some((bler, max_rounds)) = storm {
            let mut r = 0;
            while r < max_rounds && self.rng.gen::<f64>() < bler {
                r += 1;
            }
            tb.failures_left = r;
        }
    }

    /// One transmission of `tb` at `t`: either it fails and is queued for
    /// another attempt, or its packets move toward delivery.
    fn attempt(&mut self, d: Direction, t: u64, mut tb: Tb, harq_rtt: u64, rlc_penalty: u64) {
        if tb.failures_left > 0 {
            tb.failures_left -= 1;
            let due = if tb.failures_left == 0 && tb.rlc {
                tb.rlc_stage = true;
                tb.first_tx + rlc_penalty
            } else {
                t + harq_rtt
            };
            let link = &mut self.links[di(d)];
            link.seq += 1;
            link.retx.insert((due, link.seq), tb);
            return;
        }
        let mut done = t + self.slot_us;
        let link = &mut self.links[di(d)];
        if tb.rlc {
            if let Some((from, until)) = link.hol {
                link.hol = Some((from, until.max(done)));
            }
        } else if let Some((from, until)) = link.hol {
            if tb.first_tx > from {
                done = done.max(until);
            }
        }
        for &p in &tb.pkts {
            let pk = &mut self.pkts[p];
            pk.deliver = pk.deliver.max(done);
            pk.pending_tbs -= 1;
            if pk.pending_tbs == 0 && pk.assigned {
                let at = match pk.dir {
                    Direction::Ul => pk.deliver + pk.core,
                    Direction::Dl => pk.deliver,
                };
                self.deliveries.push(Reverse((at, p)));
            }
        }
    }

    fn other_ues(&mut self, t: u64) {
        let prob = self.sc.cell.background_prob;
        for d in Direction::BOTH {
            if !self.tdd_allows(d, t) {
                continue;
            }
            let cross = self
                .active(EventKind::CrossTraffic, Some(d), t)
                .map(|a| a.ev.param("other_prb") as u32)
                .max();
            if let Some(prb) = cross {
                self.emit(
                    t,
                    d,
                    CROSS_RNTI,
                    prb,
                    15,
                    tbs_bits(prb, 15),
                    false,
                    (false, false, false),
                );
            }
            if prob > 0.0 && self.bg_rng.gen_bool(prob) {
                let rnti = BACKGROUND_RNTIS[self.bg_rng.gen_range(0..BACKGROUND_RNTIS.len())];
                self.emit(t, d, rnti, 2, 12, tbs_bits(2, 12), false, (false, false, false));
            }
        }
    }

    fn sample_app(&mut self, t: u64) {
        for d in Direction::BOTH {
            let h = &mut self.played_hist[di(d)];
            h.push_back(std::mem::take(&mut self.played[di(d)]));
            if h.len() > FPS_HISTORY {
                h.pop_front();
            }
        }
        if !self.in_trace(t) {
            return;
        }
        let fps = self.sc.media.fps;
        let frame_ms = 1000.0 / fps;
        for side in Side::BOTH {
            let sends = match side {
                Side::Local => Direction::Ul,
                Side::Remote => Direction::Dl,
            };
            let recvs = sends.opposite();
            let g = &self.gcc[di(sends)];
            let jb = &self.jb[di(recvs)];
            let played: f64 = self.played_hist[di(recvs)].iter().sum();
            let span_s = self.played_hist[di(recvs)].len() as f64 * APP_INTERVAL_US as f64 / 1e6;
            let in_fps = played / frame_ms / span_s;
            let pushback = g.pushback_bps().round();
            let res = if pushback >= 1_200_000.0 {
                720
            } else if pushback >= 600_000.0 {
                540
            } else {
                360
            };
            let mut buffered = (jb.buffered_ms() * 1000.0).round() / 1000.0;
            if buffered == 0.0 && jb.buffered_ms() > 0.0 {
                buffered = 0.001;
            }
            self.app.push(AppRecord {
                ts: Timestamp::from_micros(t - WARMUP_US),
                side,
                in_fps: (in_fps * 100.0).round() / 100.0,
                out_fps: fps,
                out_res_height: res,
                jitter_buffer_ms: buffered,
                target_bitrate_bps: g.target_bps().round(),
                pushback_rate_bps: pushback,
                gcc_state: g.state(),
                outstanding_bytes: g.outstanding_bytes(),
                cwnd_bytes: g.cwnd_bytes(),
                app_send_rate_bps: pushback,
            });
        }
    }

    fn finish(self) -> (Trace, SynthStats) {
        let end = self.end_gen;
        let packets = self
            .pkts
            .iter()
            .filter(|p| p.send >= WARMUP_US && p.send < end)
            .map(|p| PacketRecord {
                send_ts: Timestamp::from_micros(p.send - WARMUP_US),
                recv_ts: Timestamp::from_micros(p.recv.expect("all packets drain") - WARMUP_US),
                dir: p.dir,
                size_bytes: p.size,
                kind: p.kind,
            })
            .collect();
        let mut trace = Trace {
            ran: self.ran,
            packets,
            app: self.app,
            meta: TraceMeta {
                cell: self.sc.name.clone(),
                duplexing: self.sc.cell.duplexing,
                bandwidth_mhz: self.sc.cell.bandwidth_mhz,
            },
        };
        trace.sort_streams();
        (trace, self.stats)
    }
}
