//! True/false fixture pairs straddling every condition threshold. Each case
//! is checked against the hard-coded detector and the compiled built-in
//! plan.

use domino_core::detect::{detect, DetectorConfig, EventId, Family, Selector};
use domino_core::dsl::builtin_plan;
use domino_core::trace::{
    slice, AppRecord, Direction, GccState, PacketKind, PacketRecord, RanRecord, Side, Timestamp, Trace, Window,
};

use EventId::*;

fn ms(v: f64) -> Timestamp {
    Timestamp::from_millis_f64(v)
}

fn app(i: usize, side: Side) -> AppRecord {
    AppRecord {
        ts: ms(i as f64 * 50.0),
        side,
        in_fps: 30.0,
        out_fps: 30.0,
        out_res_height: 720,
        jitter_buffer_ms: 80.0,
        target_bitrate_bps: 2e6,
        pushback_rate_bps: 2e6,
        gcc_state: GccState::Normal,
        outstanding_bytes: 10_000,
        cwnd_bytes: 50_000,
        app_send_rate_bps: 2e6,
    }
}

fn ran(t_ms: f64, dir: Direction) -> RanRecord {
    RanRecord {
        ts: ms(t_ms),
        dir,
        rnti: 100,
        prb: 10,
        mcs: 22,
        tbs_bits: 6500,
        is_own_ue: true,
        harq_retx: false,
        rlc_retx: false,
        proactive_grant: false,
    }
}

/// Local-side app series, one record per value.
fn app_series(values: &[f64], set: fn(&mut AppRecord, f64)) -> Trace {
    Trace {
        app: values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut a = app(i, Side::Local);
                set(&mut a, v);
                a
            })
            .collect(),
        ..Default::default()
    }
}

/// Own-UE records every 10 ms in `dir`.
fn ran_series(n: usize, dir: Direction, set: impl Fn(usize, &mut RanRecord)) -> Trace {
    Trace {
        ran: (0..n)
            .map(|i| {
                let mut r = ran(i as f64 * 10.0, dir);
                set(i, &mut r);
                r
            })
            .collect(),
        ..Default::default()
    }
}

fn delays(values: &[f64], kind: PacketKind, dir: Direction) -> Trace {
    Trace {
        packets: values
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let send = i as f64 * 20.0;
                PacketRecord {
                    send_ts: ms(send),
                    recv_ts: ms(send + d),
                    dir,
                    size_bytes: 1200,
                    kind,
                }
            })
            .collect(),
        ..Default::default()
    }
}

/// Ten samples at `a` followed by ten at `b`: one bucket-to-bucket step.
fn step(a: f64, b: f64) -> Vec<f64> {
    let mut v = vec![a; 10];
    v.extend([b; 10]);
    v
}

/// Own UL records spaced 1 ms apart with `tbs` bits each, behind a local
/// sender at 2 Mbps: a record is short of the app rate when `tbs` < 2000.
fn rate_gap(short: usize) -> Trace {
    Trace {
        app: vec![app(0, Side::Local)],
        ran: (0..10)
            .map(|i| {
                let mut r = ran(1.0 + i as f64, Direction::Ul);
                r.tbs_bits = if i < short { 1000 } else { 2000 };
                r
            })
            .collect(),
        ..Default::default()
    }
}

/// Own and other-UE PRB totals in the UL.
fn prb_split(own: u32, other: u32) -> Trace {
    let mut a = ran(0.0, Direction::Ul);
    a.prb = own;
    let mut b = ran(1.0, Direction::Ul);
    b.is_own_ue = false;
    b.rnti = 200;
    b.prb = other;
    Trace {
        ran: vec![a, b],
        ..Default::default()
    }
}

/// Twelve 50 ms buckets of five own DL records; the first `low` buckets
/// sit at MCS 5, the rest at 15, and the last bucket's top record is `peak`.
fn mcs_buckets(low: usize, peak: u8) -> Trace {
    ran_series(60, Direction::Dl, |i, r| {
        r.mcs = if i / 5 < low { 5 } else { 15 };
        if i == 59 {
            r.mcs = peak;
        }
    })
}

fn flagged(n: usize, f: fn(&mut RanRecord)) -> Trace {
    ran_series(40, Direction::Dl, |i, r| {
        if i < n {
            f(r)
        }
    })
}

struct Case {
    name: &'static str,
    id: EventId,
    sel: Selector,
    trace: Trace,
    expect: bool,
}

fn case(name: &'static str, id: EventId, sel: Selector, trace: Trace, expect: bool) -> Case {
    Case {
        name,
        id,
        sel,
        trace,
        expect,
    }
}

fn cases() -> Vec<Case> {
    let local = Selector::Side(Side::Local);
    let ul = Selector::Dir(Direction::Ul);
    let dl = Selector::Dir(Direction::Dl);
    let none = Selector::None;
    let in_fps: fn(&mut AppRecord, f64) = |a, v| a.in_fps = v;
    let out_fps: fn(&mut AppRecord, f64) = |a, v| a.out_fps = v;
    let res: fn(&mut AppRecord, f64) = |a, v| a.out_res_height = v as u32;
    let jb: fn(&mut AppRecord, f64) = |a, v| a.jitter_buffer_ms = v;
    let target: fn(&mut AppRecord, f64) = |a, v| a.target_bitrate_bps = v;
    let pushback: fn(&mut AppRecord, f64) = |a, v| {
        a.pushback_rate_bps = v;
        a.target_bitrate_bps = a.target_bitrate_bps.max(v);
    };
    let state: fn(&mut AppRecord, f64) = |a, v| {
        a.gcc_state = match v as u8 {
            0 => GccState::Normal,
            1 => GccState::Overuse,
            _ => GccState::Underuse,
        }
    };
    let outstanding: fn(&mut AppRecord, f64) = |a, v| a.outstanding_bytes = v as u64;
    let gap: fn(&mut AppRecord, f64) = |a, v| a.pushback_rate_bps = a.target_bitrate_bps - v;
    let media = PacketKind::Media;
    let rtcp = PacketKind::Rtcp;
    vec![
        case(
            "fps 28 then 24",
            A1InFpsDrop,
            local,
            app_series(&[28.0, 24.0], in_fps),
            true,
        ),
        case(
            "fps peak 27 not above 27",
            A1InFpsDrop,
            local,
            app_series(&[27.0, 24.0], in_fps),
            false,
        ),
        case(
            "fps dip 25 not below 25",
            A1InFpsDrop,
            local,
            app_series(&[28.0, 25.0], in_fps),
            false,
        ),
        case(
            "fps dip before peak",
            A1InFpsDrop,
            local,
            app_series(&[24.0, 28.0], in_fps),
            false,
        ),
        case(
            "out fps 28 then 24",
            A2OutFpsDrop,
            local,
            app_series(&[28.0, 24.0], out_fps),
            true,
        ),
        case(
            "out fps dip 25",
            A2OutFpsDrop,
            local,
            app_series(&[28.0, 25.0], out_fps),
            false,
        ),
        case(
            "resolution 720 to 719",
            A3OutResDrop,
            local,
            app_series(&[720.0, 719.0], res),
            true,
        ),
        case(
            "resolution rises",
            A3OutResDrop,
            local,
            app_series(&[480.0, 720.0], res),
            false,
        ),
        case(
            "resolution flat",
            A3OutResDrop,
            local,
            app_series(&[720.0, 720.0], res),
            false,
        ),
        case(
            "jitter buffer hits 0",
            A4JbDrain,
            local,
            app_series(&[50.0, 0.0], jb),
            true,
        ),
        case(
            "jitter buffer at 0.1 ms",
            A4JbDrain,
            local,
            app_series(&[50.0, 0.1], jb),
            false,
        ),
        case(
            "target drops by 1 bps",
            A5TargetDrop,
            local,
            app_series(&[2e6, 2e6 - 1.0], target),
            true,
        ),
        case(
            "target rises",
            A5TargetDrop,
            local,
            app_series(&[1.9e6, 2e6], target),
            false,
        ),
        case(
            "overuse state",
            A6GccOveruse,
            local,
            app_series(&[0.0, 1.0], state),
            true,
        ),
        case(
            "underuse only",
            A6GccOveruse,
            local,
            app_series(&[0.0, 2.0], state),
            false,
        ),
        case(
            "pushback drops",
            A7PushbackDrop,
            local,
            app_series(&[2e6, 1.5e6], pushback),
            true,
        ),
        case(
            "pushback flat",
            A7PushbackDrop,
            local,
            app_series(&[2e6, 2e6], pushback),
            false,
        ),
        case(
            "outstanding 50001 over 50000",
            A8CwndFull,
            local,
            app_series(&[50_001.0], outstanding),
            true,
        ),
        case(
            "outstanding equals cwnd",
            A8CwndFull,
            local,
            app_series(&[50_000.0], outstanding),
            false,
        ),
        case(
            "outstanding bucket mean rises",
            A9OutstandingUp,
            local,
            app_series(&step(100.0, 101.0), outstanding),
            true,
        ),
        case(
            "outstanding flat",
            A9OutstandingUp,
            local,
            app_series(&step(100.0, 100.0), outstanding),
            false,
        ),
        case(
            "outstanding falls",
            A9OutstandingUp,
            local,
            app_series(&step(101.0, 100.0), outstanding),
            false,
        ),
        case(
            "pushback 1 bps under target",
            A10PushbackNeqTarget,
            local,
            app_series(&[0.0, 1.0], gap),
            true,
        ),
        case(
            "pushback equals target",
            A10PushbackNeqTarget,
            local,
            app_series(&[0.0, 0.0], gap),
            false,
        ),
        case(
            "delay rises past 80 ms",
            N11FwdDelayUp,
            ul,
            delays(&step(70.0, 81.0), media, Direction::Ul),
            true,
        ),
        case(
            "delay rises to exactly 80 ms",
            N11FwdDelayUp,
            ul,
            delays(&step(70.0, 80.0), media, Direction::Ul),
            false,
        ),
        case(
            "delay high but flat",
            N11FwdDelayUp,
            ul,
            delays(&step(120.0, 120.0), media, Direction::Ul),
            false,
        ),
        case(
            "delay rise in the other direction",
            N11FwdDelayUp,
            dl,
            delays(&step(70.0, 81.0), media, Direction::Ul),
            false,
        ),
        case(
            "rtcp delay rises on reverse path",
            N12RevDelayUp,
            ul,
            delays(&step(70.0, 81.0), rtcp, Direction::Dl),
            true,
        ),
        case(
            "rtcp rise on forward path",
            N12RevDelayUp,
            ul,
            delays(&step(70.0, 81.0), rtcp, Direction::Ul),
            false,
        ),
        case(
            "rtcp rise to exactly 80 ms",
            N12RevDelayUp,
            ul,
            delays(&step(70.0, 80.0), rtcp, Direction::Dl),
            false,
        ),
        case(
            "tbs falls below 0.8 of peak",
            R13TbsDrop,
            dl,
            ran_series(2, Direction::Dl, |i, r| r.tbs_bits = [10_000, 7_999][i]),
            true,
        ),
        case(
            "tbs falls to 0.8 of peak",
            R13TbsDrop,
            dl,
            ran_series(2, Direction::Dl, |i, r| r.tbs_bits = [10_000, 8_000][i]),
            false,
        ),
        case(
            "tbs rises",
            R13TbsDrop,
            dl,
            ran_series(2, Direction::Dl, |i, r| r.tbs_bits = [5_000, 10_000][i]),
            false,
        ),
        case("rate gap in 20% of records", R14RateGap, ul, rate_gap(2), true),
        case("rate gap in 10% of records", R14RateGap, ul, rate_gap(1), false),
        case("rate gap never", R14RateGap, ul, rate_gap(0), false),
        case(
            "other UEs 21% of own PRBs",
            R15CrossTraffic,
            ul,
            prb_split(100, 21),
            true,
        ),
        case(
            "other UEs 20% of own PRBs",
            R15CrossTraffic,
            ul,
            prb_split(100, 20),
            false,
        ),
        case(
            "cross traffic in the other direction",
            R15CrossTraffic,
            dl,
            prb_split(100, 21),
            false,
        ),
        case(
            "11 low-MCS buckets, peak 19",
            R16ChannelDegraded,
            dl,
            mcs_buckets(11, 19),
            true,
        ),
        case(
            "11 low-MCS buckets, peak 20",
            R16ChannelDegraded,
            dl,
            mcs_buckets(11, 20),
            false,
        ),
        case("10 low-MCS buckets", R16ChannelDegraded, dl, mcs_buckets(10, 15), false),
        case("12 low-MCS buckets", R16ChannelDegraded, dl, mcs_buckets(12, 5), true),
        case(
            "11 HARQ retransmissions",
            R17HarqRetx,
            dl,
            flagged(11, |r| r.harq_retx = true),
            true,
        ),
        case(
            "10 HARQ retransmissions",
            R17HarqRetx,
            dl,
            flagged(10, |r| r.harq_retx = true),
            false,
        ),
        case(
            "one RLC retransmission",
            R18RlcRetx,
            dl,
            flagged(1, |r| r.rlc_retx = true),
            true,
        ),
        case(
            "no RLC retransmission",
            R18RlcRetx,
            dl,
            flagged(0, |r| r.rlc_retx = true),
            false,
        ),
        case(
            "RLC retransmission in the uplink",
            R18RlcRetx,
            ul,
            flagged(1, |r| r.rlc_retx = true),
            false,
        ),
        case(
            "own UL grant",
            S19UlScheduling,
            none,
            ran_series(1, Direction::Ul, |_, _| {}),
            true,
        ),
        case(
            "downlink only",
            S19UlScheduling,
            none,
            ran_series(5, Direction::Dl, |_, _| {}),
            false,
        ),
        case(
            "own RNTI changes",
            S20RrcChange,
            none,
            ran_series(4, Direction::Dl, |i, r| r.rnti = if i < 2 { 100 } else { 101 }),
            true,
        ),
        case(
            "own RNTI constant",
            S20RrcChange,
            none,
            ran_series(4, Direction::Dl, |_, _| {}),
            false,
        ),
        case(
            "only another UE's RNTI differs",
            S20RrcChange,
            none,
            ran_series(4, Direction::Dl, |i, r| {
                if i == 2 {
                    r.is_own_ue = false;
                    r.rnti = 300;
                }
            }),
            false,
        ),
    ]
}

pub fn run() -> Result<String, String> {
    let cfg = DetectorConfig::default();
    let plan = builtin_plan();
    let window = Window::new(Timestamp::ZERO, 5.0).map_err(|e| e.to_string())?;
    let all = cases();
    let mut covered = std::collections::BTreeSet::new();
    let mut failures = Vec::new();
    for c in &all {
        let view = slice(&c.trace, &window);
        let got = detect(&view, c.id, c.sel, &cfg).map_err(|e| e.to_string())?;
        // Packet events take the media direction; their slot is fixed.
        let (slot, media_dir) = match (c.id.family(), c.sel) {
            (Family::Packet, Selector::Dir(d)) => (c.id.slot(Selector::None), d),
            _ => (c.id.slot(c.sel), Direction::Ul),
        };
        let slot = slot.map_err(|e| e.to_string())?;
        let compiled = plan.evaluate_slot(slot, &view, media_dir, &cfg);
        if got != c.expect || compiled != c.expect {
            failures.push(format!("{} ({}): detector {got}, plan {compiled}", c.name, c.id));
        }
        covered.insert((c.id, c.expect));
    }
    let missing: Vec<String> = EventId::ALL
        .iter()
        .flat_map(|&id| [true, false].map(|b| (id, b)))
        .filter(|k| !covered.contains(k))
        .map(|(id, b)| format!("{id}={b}"))
        .collect();
    if !missing.is_empty() {
        return Err(format!("no fixture for {}", missing.join(", ")));
    }
    if all.len() < 40 {
        return Err(format!("only {} fixtures", all.len()));
    }
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    Ok(format!(
        "{} fixtures over 20 conditions, detector and compiled plan exact",
        all.len()
    ))
}
