//! Mechanism magnitudes measured from the csv files `domino synth` writes,
//! parsed here without the crate's own reader.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use domino_cli::{cmd_synth, SynthArgs};

struct Pkt {
    send_us: i64,
    recv_us: i64,
    dl: bool,
    media: bool,
}

struct Ran {
    ts_us: i64,
    ul: bool,
    rnti: u32,
    own: bool,
    harq: bool,
    proactive: bool,
}

/// Rows of a csv file keyed by header name.
fn rows(path: &Path) -> Result<Vec<HashMap<String, String>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty csv")?.split(',').collect();
    Ok(lines
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect())
}

fn int(row: &HashMap<String, String>, key: &str) -> i64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}: {}", row[key]))
}

struct Call {
    pkts: Vec<Pkt>,
    ran: Vec<Ran>,
}

/// Writes `script` to a scratch directory, runs the synth command on it and
/// reads back the packet and RAN files.
fn synth(script: &str) -> Result<Call, String> {
    let tmp = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let sc = tmp.path().join("scenario.txt");
    fs::write(&sc, script).map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    cmd_synth(&SynthArgs {
        scenario: sc,
        seed: None,
        out: out.clone(),
    })
    .map_err(|f| f.message)?;
    let pkts = rows(&out.join("pkt.csv"))?
        .iter()
        .map(|r| Pkt {
            send_us: int(r, "send_ts_us"),
            recv_us: int(r, "recv_ts_us"),
            dl: r["dir"] == "dl",
            media: r["kind"] == "media",
        })
        .collect();
    let ran = rows(&out.join("ran.csv"))?
        .iter()
        .map(|r| Ran {
            ts_us: int(r, "ts_us"),
            ul: r["dir"] == "ul",
            rnti: int(r, "rnti") as u32,
            own: r["own"] == "1",
            harq: r["harq_retx"] == "1",
            proactive: r["proactive"] == "1",
        })
        .collect();
    Ok(Call { pkts, ran })
}

/// Light load so queues stay empty and only the injected mechanism moves
/// the delay.
fn low_load(events: &str) -> String {
    format!("duration_s = 12\nmax_bitrate_bps = 150000\npacket_bytes = 400\n{events}")
}

fn delay_ms(p: &Pkt) -> f64 {
    (p.recv_us - p.send_us) as f64 / 1000.0
}

fn in_range(p: &Pkt, from_s: f64, to_s: f64) -> bool {
    let s = p.send_us as f64 / 1e6;
    s >= from_s && s < to_s
}

fn median(mut v: Vec<f64>) -> Result<f64, String> {
    if v.is_empty() {
        return Err("no samples".into());
    }
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

fn media_delays(c: &Call, dl: bool, from_s: f64, to_s: f64) -> Vec<f64> {
    c.pkts
        .iter()
        .filter(|p| p.dl == dl && p.media && in_range(p, from_s, to_s))
        .map(delay_ms)
        .collect()
}

fn harq() -> Result<String, String> {
    let mut per_round = Vec::new();
    for rounds in [1, 2, 3] {
        let c = synth(&low_load(&format!(
            "event = HARQ_STORM start=5 duration=4 dir=dl bler=1 max_rounds={rounds}\n"
        )))?;
        let base = median(media_delays(&c, true, 1.0, 4.5))?;
        let hit = median(media_delays(&c, true, 5.5, 8.5))?;
        let added = (hit - base) / rounds as f64;
        if (added - 10.0).abs() > 1.0 {
            return Err(format!("HARQ {rounds} rounds: {added:.2} ms per round"));
        }
        if !c.ran.iter().any(|r| r.harq) {
            return Err("no HARQ retransmission records".into());
        }
        per_round.push(format!("{added:.1}"));
    }
    Ok(format!("HARQ {} ms/round", per_round.join("/")))
}

fn rlc() -> Result<String, String> {
    let c = synth(&low_load(
        "event = RLC_RETX start=5 duration=2 dir=dl interval_ms=500\n",
    ))?;
    let base = median(media_delays(&c, true, 1.0, 4.5))?;
    let dl: Vec<&Pkt> = c.pkts.iter().filter(|p| p.dl && p.send_us >= 4_500_000).collect();
    let worst = dl
        .iter()
        .max_by_key(|p| p.recv_us - p.send_us)
        .ok_or("no downlink packets")?;
    let added = delay_ms(worst) - base;
    if (added - 105.0).abs() > 5.0 {
        return Err(format!("RLC adds {added:.1} ms"));
    }
    // Head-of-line blocking: the packets queued behind the lost block leave
    // together.
    let cluster = dl.iter().filter(|p| p.recv_us == worst.recv_us).count();
    if cluster < 3 {
        return Err(format!("release cluster of {cluster}"));
    }
    Ok(format!("RLC +{added:.1} ms, cluster of {cluster}"))
}

fn rrc() -> Result<String, String> {
    let c = synth(&low_load("event = RRC_TRANSITION start=5 duration=1 dir=ul\n"))?;
    let own: Vec<&Ran> = c.ran.iter().filter(|r| r.own).collect();
    let old = own.first().ok_or("no own records")?.rnti;
    let last_old = own.iter().filter(|r| r.rnti == old).map(|r| r.ts_us).max().unwrap();
    let first_new = own
        .iter()
        .filter(|r| r.rnti != old)
        .map(|r| r.ts_us)
        .min()
        .ok_or("RNTI never changed")?;
    let gap = (first_new - last_old) as f64 / 1000.0;
    if (gap - 300.0).abs() > 10.0 {
        return Err(format!("blackout {gap:.1} ms"));
    }
    let mut peaks = Vec::new();
    for dl in [false, true] {
        let peak = media_delays(&c, dl, 4.0, 7.0).into_iter().fold(0.0, f64::max);
        if !(350.0..=450.0).contains(&peak) {
            return Err(format!("peak delay {peak:.1} ms (dl = {dl})"));
        }
        peaks.push(format!("{peak:.0}"));
    }
    Ok(format!("RRC blackout {gap:.1} ms, peaks {} ms", peaks.join("/")))
}

/// For each uplink burst, the wait between the first packet queued after
/// the previous burst and the grant that starts the burst.
fn ul_sched() -> Result<String, String> {
    let c = synth(&low_load(""))?;
    let grants: Vec<i64> = c
        .ran
        .iter()
        .filter(|r| r.own && r.ul && !r.proactive && !r.harq)
        .map(|r| r.ts_us)
        .collect();
    let mut sends: Vec<i64> = c.pkts.iter().filter(|p| !p.dl).map(|p| p.send_us).collect();
    sends.sort_unstable();
    let mut waits = Vec::new();
    let mut prev: Option<i64> = None;
    for &g in &grants {
        if prev.is_none_or(|e| g > e + 1_000) {
            let after = prev.unwrap_or(-1);
            let k = sends.partition_point(|&s| s <= after);
            if let Some(&first) = sends.get(k) {
                if first <= g {
                    waits.push((g - first) as f64 / 1000.0);
                }
            }
        }
        prev = Some(g);
    }
    if waits.len() < 100 {
        return Err(format!("only {} bursts", waits.len()));
    }
    let (lo, hi) = waits
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
    if lo < 5.0 || hi > 25.0 {
        return Err(format!("UL waits span [{lo:.1}, {hi:.1}] ms"));
    }
    Ok(format!("UL wait [{lo:.1}, {hi:.1}] ms over {} bursts", waits.len()))
}

pub fn run() -> Result<String, String> {
    let parts = [harq()?, rlc()?, rrc()?, ul_sched()?];
    Ok(parts.join("; "))
}
