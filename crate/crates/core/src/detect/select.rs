//! Stream selections and derived per-sample series shared by the built-in
//! detector and the compiled-plan interpreter.

use crate::trace::{AppRecord, Direction, PacketKind, PacketRecord, RanRecord, Side, Timestamp, WindowView};

pub fn app_side<'a>(view: &WindowView<'a>, side: Side) -> Vec<&'a AppRecord> {
    view.app.iter().filter(|a| a.side == side).collect()
}

/// Own-UE RAN records, optionally restricted to one direction.
pub fn own_ran<'a>(view: &WindowView<'a>, dir: Option<Direction>) -> Vec<&'a RanRecord> {
    view.ran
        .iter()
        .filter(|r| r.is_own_ue && dir.is_none_or(|d| r.dir == d))
        .collect()
}

/// RAN records of every UE in the cell, optionally restricted to one
/// direction.
pub fn cell_ran<'a>(view: &WindowView<'a>, dir: Option<Direction>) -> Vec<&'a RanRecord> {
    view.ran.iter().filter(|r| dir.is_none_or(|d| r.dir == d)).collect()
}

pub fn packets<'a>(view: &WindowView<'a>, kind: PacketKind, dir: Option<Direction>) -> Vec<&'a PacketRecord> {
    view.packets
        .iter()
        .filter(|p| p.kind == kind && dir.is_none_or(|d| p.dir == d))
        .collect()
}

/// Lower median of the positive gaps between consecutive timestamps.
pub fn median_spacing_us(ts: &[Timestamp]) -> Option<u64> {
    let mut gaps: Vec<u64> = ts
        .windows(2)
        .map(|w| w[1].micros().saturating_sub(w[0].micros()))
        .filter(|&g| g > 0)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    Some(gaps[(gaps.len() - 1) / 2])
}

/// Application send rate minus physical-layer rate, one sample per RAN
/// record. The physical rate is the record's TBS over the median spacing of
/// the records; the application rate is the last application sample at or
/// before the RAN timestamp. Samples without a preceding application value
/// (or without a defined spacing) are NaN.
pub fn rate_gap_series(ran: &[&RanRecord], sender_app: &[&AppRecord]) -> Vec<f64> {
    let ts: Vec<Timestamp> = ran.iter().map(|r| r.ts).collect();
    let spacing = median_spacing_us(&ts);
    let mut j = 0usize;
    let mut held: Option<f64> = None;
    ran.iter()
        .map(|r| {
            while j < sender_app.len() && sender_app[j].ts <= r.ts {
                held = Some(sender_app[j].app_send_rate_bps);
                j += 1;
            }
            match (held, spacing) {
                (Some(app), Some(sp)) => app - r.tbs_bits as f64 / (sp as f64 / 1e6),
                _ => f64::NAN,
            }
        })
        .collect()
}

/// Nearest-rank percentile of unsorted values, `p` in (0, 100].
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}
