//! Randomized windows run through the hard-coded detector and the compiled
//! built-in spec; features, chain matches and attributions must agree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use domino_core::detect::{featurize_view, DetectorConfig, FEATURE_LEN};
use domino_core::dsl::{builtin_plan, compile_standalone, emit_pseudocode, parse};
use domino_core::graph::{default_graph, ChainMatcher};
use domino_core::trace::{
    slice, AppRecord, Direction, GccState, PacketKind, PacketRecord, RanRecord, Side, Timestamp, Trace, Window,
};

const WINDOWS: usize = 1000;

fn us(v: f64) -> Timestamp {
    Timestamp::from_micros(v.max(0.0) as u64)
}

/// Bounded random walk; `drift` biases the direction of each step.
fn walk(rng: &mut ChaCha8Rng, n: usize, start: f64, step: f64, drift: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut v = start;
    (0..n)
        .map(|_| {
            v = (v + drift + rng.gen_range(-step..=step)).clamp(lo, hi);
            v
        })
        .collect()
}

fn app_stream(rng: &mut ChaCha8Rng, side: Side, out: &mut Vec<AppRecord>) {
    let n = 100;
    let fps_drift = if rng.gen_bool(0.5) { -0.1 } else { 0.0 };
    let (a, b) = (rng.gen_range(24.0..31.0), rng.gen_range(24.0..31.0));
    let in_fps = walk(rng, n, a, 1.0, fps_drift, 0.0, 31.0);
    let out_fps = walk(rng, n, b, 1.0, fps_drift, 0.0, 31.0);
    let res_drops = rng.gen_bool(0.3);
    let jb_zero = rng.gen_bool(0.3);
    let target_moves = rng.gen_bool(0.4);
    let overuse = rng.gen_bool(0.2);
    let pushback_gap = rng.gen_bool(0.4);
    let outstanding_up = rng.gen_bool(0.5);
    let over_cwnd = rng.gen_bool(0.3);
    let cwnd = rng.gen_range(20_000..80_000u64);
    let mut target: f64 = rng.gen_range(0.5e6..2.5e6);
    let mut outstanding = rng.gen_range(1_000..10_000u64);
    for i in 0..n {
        if target_moves {
            target = (target + rng.gen_range(-50_000.0..50_000.0)).max(100_000.0);
        } else {
            target += rng.gen_range(0.0..1_000.0);
        }
        outstanding = if outstanding_up {
            outstanding + rng.gen_range(0..400)
        } else {
            outstanding.saturating_sub(rng.gen_range(0..200))
        };
        let pushback = if pushback_gap && rng.gen_bool(0.2) {
            target * rng.gen_range(0.3..1.0)
        } else {
            target
        };
        out.push(AppRecord {
            ts: us(i as f64 * 50_000.0 + rng.gen_range(0.0..1_000.0)),
            side,
            in_fps: in_fps[i],
            out_fps: out_fps[i],
            out_res_height: if res_drops && i > n / 2 { 480 } else { 720 },
            jitter_buffer_ms: if jb_zero && rng.gen_bool(0.05) {
                0.0
            } else {
                rng.gen_range(5.0..200.0)
            },
            target_bitrate_bps: target,
            pushback_rate_bps: pushback,
            gcc_state: if overuse && rng.gen_bool(0.05) {
                GccState::Overuse
            } else if rng.gen_bool(0.05) {
                GccState::Underuse
            } else {
                GccState::Normal
            },
            outstanding_bytes: if over_cwnd && rng.gen_bool(0.05) {
                cwnd + 1
            } else {
                outstanding.min(cwnd)
            },
            cwnd_bytes: cwnd,
            app_send_rate_bps: target * rng.gen_range(0.8..1.2),
        });
    }
}

fn ran_stream(rng: &mut ChaCha8Rng, dir: Direction, out: &mut Vec<RanRecord>) {
    let spacing = rng.gen_range(2_000.0..8_000.0);
    let n = (5e6 / spacing) as usize;
    let bad_channel = rng.gen_bool(0.4);
    let mcs = if bad_channel {
        walk(rng, n, 6.0, 2.0, 0.0, 0.0, 19.0)
    } else {
        walk(rng, n, 20.0, 2.0, 0.0, 0.0, 28.0)
    };
    let harq_p = [0.0, 0.005, 0.02, 0.1][rng.gen_range(0..4)];
    let rlc_p = if rng.gen_bool(0.3) { 0.003 } else { 0.0 };
    let tbs_falls = rng.gen_bool(0.4);
    let rnti_change = rng.gen_bool(0.2).then(|| rng.gen_range(0..n.max(1)));
    let others = [0.0, 0.1, 0.5][rng.gen_range(0..3)];
    for (i, &m) in mcs.iter().enumerate() {
        let t = i as f64 * spacing + rng.gen_range(0.0..500.0);
        let prb = rng.gen_range(1..12u32);
        let m = m as u8;
        let mut tbs = (prb as f64 * 144.0 * (0.15 + 0.2 * m as f64)) as u64;
        if tbs_falls && i > n / 2 {
            tbs /= 2;
        }
        out.push(RanRecord {
            ts: us(t),
            dir,
            rnti: if rnti_change.is_some_and(|k| i >= k) { 101 } else { 100 },
            prb,
            mcs: m,
            tbs_bits: tbs,
            is_own_ue: true,
            harq_retx: rng.gen_bool(harq_p),
            rlc_retx: rng.gen_bool(rlc_p),
            proactive_grant: dir == Direction::Ul && rng.gen_bool(0.1),
        });
        if rng.gen_bool(others) {
            out.push(RanRecord {
                ts: us(t + 100.0),
                rnti: rng.gen_range(200..210),
                prb: rng.gen_range(1..20),
                is_own_ue: false,
                harq_retx: false,
                rlc_retx: false,
                proactive_grant: false,
                ..out[out.len() - 1]
            });
        }
    }
}

fn packet_stream(rng: &mut ChaCha8Rng, dir: Direction, kind: PacketKind, out: &mut Vec<PacketRecord>) {
    let spacing = if kind == PacketKind::Media {
        rng.gen_range(5_000.0..20_000.0)
    } else {
        50_000.0
    };
    let n = (5e6 / spacing) as usize;
    let drift = [0.0, 0.5, 2.0, -0.5][rng.gen_range(0..4)];
    let start = rng.gen_range(20.0..100.0);
    let delay = walk(rng, n, start, 3.0, drift, 1.0, 600.0);
    for (i, d) in delay.into_iter().enumerate() {
        let send = i as f64 * spacing + rng.gen_range(0.0..1_000.0);
        out.push(PacketRecord {
            send_ts: us(send),
            recv_ts: us(send + d * 1000.0),
            dir,
            size_bytes: rng.gen_range(100..1300),
            kind,
        });
    }
}

fn random_trace(rng: &mut ChaCha8Rng) -> Trace {
    let mut t = Trace::default();
    for side in Side::BOTH {
        // Occasionally a side is missing entirely.
        if rng.gen_bool(0.95) {
            app_stream(rng, side, &mut t.app);
        }
    }
    for dir in Direction::BOTH {
        if rng.gen_bool(0.95) {
            ran_stream(rng, dir, &mut t.ran);
        }
        for kind in [PacketKind::Media, PacketKind::Rtcp] {
            if rng.gen_bool(0.95) {
                packet_stream(rng, dir, kind, &mut t.packets);
            }
        }
    }
    t.sort_streams();
    t
}

pub fn run() -> Result<String, String> {
    let cfg = DetectorConfig::default();
    let plan = builtin_plan();
    let compiled = plan.matcher();
    let builtin = ChainMatcher::for_graph(default_graph()).map_err(|e| e.to_string())?;
    let window = Window::new(Timestamp::ZERO, 5.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut seen = [[false; 2]; FEATURE_LEN];
    let mut matched = 0usize;
    for w in 0..WINDOWS {
        let trace = random_trace(&mut rng);
        let view = slice(&trace, &window);
        for dir in Direction::BOTH {
            let a = featurize_view(&view, dir, &cfg);
            let b = plan.evaluate(&view, dir, &cfg);
            if a.bits != b.bits {
                let diff: Vec<usize> = (0..FEATURE_LEN).filter(|&i| a.bits[i] != b.bits[i]).collect();
                return Err(format!("window {w} {dir}: slots {diff:?} differ"));
            }
            for (i, &bit) in a.bits.iter().enumerate() {
                seen[i][bit as usize] = true;
            }
            let ma = builtin.matches(&a, dir, Timestamp::ZERO);
            let mb = compiled.matches(&b, dir, Timestamp::ZERO);
            if ma != mb {
                return Err(format!("window {w} {dir}: chain matches differ"));
            }
            if builtin.attribute(&a, dir, &ma) != compiled.attribute(&b, dir, &mb) {
                return Err(format!("window {w} {dir}: attributions differ"));
            }
            matched += ma.len();
        }
    }
    // A corpus that never flips a slot would prove nothing about it.
    let labels = plan.slot_labels();
    let flat: Vec<&str> = (0..FEATURE_LEN)
        .filter(|&i| !(seen[i][0] && seen[i][1]))
        .map(|i| labels[i].as_str())
        .collect();
    if !flat.is_empty() {
        return Err(format!("corpus never varies {}", flat.join(", ")));
    }

    let text = emit_pseudocode(&plan);
    let again = compile_standalone(&parse(&text).map_err(|d| d.to_string())?).map_err(|d| d.to_string())?;
    if emit_pseudocode(&again) != text || again.ast != plan.ast {
        return Err("parse of emitted plan is not a fixed point".into());
    }
    Ok(format!(
        "{WINDOWS} windows x 2 directions identical, every slot seen both ways, {matched} chain matches; emit/parse fixed point"
    ))
}
