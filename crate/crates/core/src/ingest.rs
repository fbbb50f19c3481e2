//! Line-delimited telemetry files: one record per line, comma-separated
//! fields in a fixed order. A header line is optional and recognised by a
//! non-numeric first token. Lines starting with `#` and blank lines are
//! ignored.
//!
//! ```text
//! ran: ts_us,dir,rnti,prb,mcs,tbs_bits,own,harq_retx,rlc_retx,proactive
//! pkt: send_ts_us,recv_ts_us,dir,size_bytes,kind
//! app: ts_us,side,in_fps,out_fps,out_res_height,jitter_buffer_ms,
//!      target_bitrate_bps,pushback_rate_bps,gcc_state,outstanding_bytes,
//!      cwnd_bytes,app_send_rate_bps
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{DominoError, Result};
use crate::trace::{AppRecord, GccState, PacketRecord, RanRecord, Side, Timestamp, Trace, TraceMeta, MCS_MAX};

pub const RAN_HEADER: &str = "ts_us,dir,rnti,prb,mcs,tbs_bits,own,harq_retx,rlc_retx,proactive";
pub const PKT_HEADER: &str = "send_ts_us,recv_ts_us,dir,size_bytes,kind";
pub const APP_HEADER: &str = "ts_us,side,in_fps,out_fps,out_res_height,jitter_buffer_ms,target_bitrate_bps,pushback_rate_bps,gcc_state,outstanding_bytes,cwnd_bytes,app_send_rate_bps";

/// Fraction of dropped lines above which a load is rejected.
pub const MAX_DROP_FRACTION: f64 = 0.10;
/// Overlap fraction below which assembly warns.
pub const MIN_OVERLAP_FRACTION: f64 = 0.5;
const MAX_STORED_WARNINGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Ran,
    Packets,
    AppLocal,
    AppRemote,
}

/// Additive per-stream clock corrections in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockOffsets {
    pub ran_us: i64,
    pub packets_us: i64,
    pub app_local_us: i64,
    pub app_remote_us: i64,
}

impl ClockOffsets {
    pub fn get(&self, stream: StreamKind) -> i64 {
        match stream {
            StreamKind::Ran => self.ran_us,
            StreamKind::Packets => self.packets_us,
            StreamKind::AppLocal => self.app_local_us,
            StreamKind::AppRemote => self.app_remote_us,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub name: String,
    pub read: usize,
    pub kept: usize,
    pub dropped: usize,
    pub first: Option<Timestamp>,
    pub last: Option<Timestamp>,
    pub warnings: Vec<String>,
}

impl StreamReport {
    fn new(name: &str) -> Self {
        StreamReport {
            name: name.to_string(),
            ..Default::default()
        }
    }

    fn drop_line(&mut self, line_no: usize, why: String) {
        self.dropped += 1;
        if self.warnings.len() < MAX_STORED_WARNINGS {
            warn!("{}: line {}: {}", self.name, line_no, why);
            self.warnings.push(format!("line {line_no}: {why}"));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub report: StreamReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub streams: Vec<StreamReport>,
    /// Length of the time span shared by all non-empty streams.
    pub overlap_s: f64,
    /// `overlap_s` divided by the union span.
    pub overlap_fraction: f64,
    pub warnings: Vec<String>,
}

fn is_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim();
    first.parse::<f64>().is_err()
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("bad value `{s}` for {field}"))
}

fn parse_finite(s: &str, field: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse_num(s, field)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{field} is not finite"))
    }
}

fn shifted(ts_us: u64, offset: i64) -> std::result::Result<Timestamp, String> {
    Timestamp::from_micros(ts_us)
        .checked_offset(offset)
        .ok_or_else(|| format!("timestamp {ts_us} becomes negative after offset {offset}"))
}

fn fields<const N: usize>(line: &str) -> std::result::Result<[&str; N], String> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| format!("expected {N} fields, got {}", p.len()))
}

fn parse_ran_line(line: &str, offset: i64) -> std::result::Result<RanRecord, String> {
    // Trailing optional fields (rlc_retx, proactive) default to false.
    let mut parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() == 8 || parts.len() == 9 {
        parts.resize(10, "0");
    }
    let f: [&str; 10] = parts
        .try_into()
        .map_err(|p: Vec<&str>| format!("expected 10 fields, got {}", p.len()))?;
    let mcs: u32 = parse_num(f[4], "mcs")?;
    if mcs > MCS_MAX as u32 {
        return Err(format!("mcs {mcs} outside [0, {MCS_MAX}]"));
    }
    Ok(RanRecord {
        ts: shifted(parse_num(f[0], "ts_us")?, offset)?,
        dir: f[1].parse()?,
        rnti: parse_num(f[2], "rnti")?,
        prb: parse_num(f[3], "prb")?,
        mcs: mcs as u8,
        tbs_bits: parse_num(f[5], "tbs_bits")?,
        is_own_ue: parse_flag(f[6])?,
        harq_retx: parse_flag(f[7])?,
        rlc_retx: parse_flag(f[8])?,
        proactive_grant: parse_flag(f[9])?,
    })
}

fn parse_pkt_line(line: &str, offset: i64) -> std::result::Result<PacketRecord, String> {
    let f = fields::<5>(line)?;
    let send: u64 = parse_num(f[0], "send_ts_us")?;
    let recv: u64 = parse_num(f[1], "recv_ts_us")?;
    if recv < send {
        return Err(format!("recv_ts {recv} precedes send_ts {send}"));
    }
    let size: u32 = parse_num(f[3], "size_bytes")?;
    if size == 0 {
        return Err("size_bytes must be positive".into());
    }
    Ok(PacketRecord {
        send_ts: shifted(send, offset)?,
        recv_ts: shifted(recv, offset)?,
        dir: f[2].parse()?,
        size_bytes: size,
        kind: f[4].parse()?,
    })
}

fn parse_app_line(line: &str, offsets: &ClockOffsets) -> std::result::Result<AppRecord, String> {
    let f = fields::<12>(line)?;
    let side: Side = f[1].parse()?;
    let offset = match side {
        Side::Local => offsets.app_local_us,
        Side::Remote => offsets.app_remote_us,
    };
    let non_negative = |s: &str, name: &str| -> std::result::Result<f64, String> {
        let v = parse_finite(s, name)?;
        if v < 0.0 {
            Err(format!("{name} is negative"))
        } else {
            Ok(v)
        }
    };
    let cwnd: u64 = parse_num(f[10], "cwnd_bytes")?;
    if cwnd == 0 {
        return Err("cwnd_bytes must be positive".into());
    }
    Ok(AppRecord {
        ts: shifted(parse_num(f[0], "ts_us")?, offset)?,
        side,
        in_fps: non_negative(f[2], "in_fps")?,
        out_fps: non_negative(f[3], "out_fps")?,
        out_res_height: parse_num(f[4], "out_res_height")?,
        jitter_buffer_ms: non_negative(f[5], "jitter_buffer_ms")?,
        target_bitrate_bps: non_negative(f[6], "target_bitrate_bps")?,
        pushback_rate_bps: non_negative(f[7], "pushback_rate_bps")?,
        gcc_state: f[8].parse::<GccState>()?,
        outstanding_bytes: parse_num(f[9], "outstanding_bytes")?,
        cwnd_bytes: cwnd,
        app_send_rate_bps: non_negative(f[11], "app_send_rate_bps")?,
    })
}

fn parse_lines<T>(
    name: &str,
    reader: impl Read,
    mut parse: impl FnMut(&str) -> std::result::Result<T, String>,
    key: impl Fn(&T) -> Timestamp,
) -> Result<Loaded<T>> {
    let mut report = StreamReport::new(name);
    let mut records = Vec::new();
    let reader = BufReader::with_capacity(1 << 16, reader);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DominoError::Ingest(format!("{name}: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if i == 0 && is_header(trimmed) {
            continue;
        }
        report.read += 1;
        match parse(trimmed) {
            Ok(r) => records.push(r),
            Err(why) => report.drop_line(i + 1, why),
        }
    }
    if report.read > 0 && report.dropped as f64 / report.read as f64 > MAX_DROP_FRACTION {
        return Err(DominoError::Ingest(format!(
            "{name}: {} of {} lines malformed (limit {:.0}%); first problems: {}",
            report.dropped,
            report.read,
            MAX_DROP_FRACTION * 100.0,
            report.warnings.join("; ")
        )));
    }
    records.sort_by_key(&key);
    report.kept = records.len();
    report.first = records.first().map(&key);
    report.last = records.last().map(&key);
    Ok(Loaded { records, report })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| DominoError::io(path, e))
}

pub fn read_ran(reader: impl Read, offsets: &ClockOffsets) -> Result<Loaded<RanRecord>> {
    let off = offsets.ran_us;
    parse_lines("ran", reader, |l| parse_ran_line(l, off), |r| r.ts)
}

pub fn read_packets(reader: impl Read, offsets: &ClockOffsets) -> Result<Loaded<PacketRecord>> {
    let off = offsets.packets_us;
    parse_lines("packets", reader, |l| parse_pkt_line(l, off), |p| p.send_ts)
}

pub fn read_app(reader: impl Read, offsets: &ClockOffsets) -> Result<Loaded<AppRecord>> {
    parse_lines("app", reader, |l| parse_app_line(l, offsets), |a| a.ts)
}

pub fn load_ran(path: impl AsRef<Path>, offsets: &ClockOffsets) -> Result<Loaded<RanRecord>> {
    read_ran(open(path.as_ref())?, offsets)
}

pub fn load_packets(path: impl AsRef<Path>, offsets: &ClockOffsets) -> Result<Loaded<PacketRecord>> {
    read_packets(open(path.as_ref())?, offsets)
}

pub fn load_app(path: impl AsRef<Path>, offsets: &ClockOffsets) -> Result<Loaded<AppRecord>> {
    read_app(open(path.as_ref())?, offsets)
}

fn span_of(report: &StreamReport) -> Option<(u64, u64)> {
    Some((report.first?.micros(), report.last?.micros()))
}

/// Merges loaded streams into a [`Trace`], checking that they share a time
/// span.
pub fn assemble(
    ran: Loaded<RanRecord>,
    packets: Loaded<PacketRecord>,
    app: Loaded<AppRecord>,
    meta: TraceMeta,
) -> Result<(Trace, IngestReport)> {
    let mut warnings = Vec::new();
    let reports = [ran.report, packets.report, app.report];
    for r in &reports {
        if r.kept == 0 {
            warnings.push(format!("{} stream is empty", r.name));
        }
    }
    let spans: Vec<(&str, (u64, u64))> = reports
        .iter()
        .filter_map(|r| span_of(r).map(|s| (r.name.as_str(), s)))
        .collect();
    for (i, (na, a)) in spans.iter().enumerate() {
        for (nb, b) in &spans[i + 1..] {
            if a.0 > b.1 || b.0 > a.1 {
                return Err(DominoError::Ingest(format!(
                    "{na} and {nb} streams do not overlap in time"
                )));
            }
        }
    }
    let (overlap_s, overlap_fraction) = if spans.is_empty() {
        (0.0, 0.0)
    } else {
        let lo = spans.iter().map(|(_, s)| s.0).max().unwrap();
        let hi = spans.iter().map(|(_, s)| s.1).min().unwrap();
        let ulo = spans.iter().map(|(_, s)| s.0).min().unwrap();
        let uhi = spans.iter().map(|(_, s)| s.1).max().unwrap();
        let shared = hi.saturating_sub(lo) as f64 / 1e6;
        let union = (uhi - ulo) as f64 / 1e6;
        (shared, if union > 0.0 { shared / union } else { 1.0 })
    };
    if !spans.is_empty() && overlap_fraction < MIN_OVERLAP_FRACTION {
        warnings.push(format!(
            "streams overlap for {overlap_s:.3} s, {:.1}% of the covered span",
            overlap_fraction * 100.0
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    let trace = Trace {
        ran: ran.records,
        packets: packets.records,
        app: app.records,
        meta,
    };
    Ok((
        trace,
        IngestReport {
            streams: reports.to_vec(),
            overlap_s,
            overlap_fraction,
            warnings,
        },
    ))
}

/// Loads and assembles the three files of one call.
pub fn load_trace(
    ran: impl AsRef<Path>,
    packets: impl AsRef<Path>,
    app: impl AsRef<Path>,
    offsets: &ClockOffsets,
    meta: TraceMeta,
) -> Result<(Trace, IngestReport)> {
    assemble(
        load_ran(ran, offsets)?,
        load_packets(packets, offsets)?,
        load_app(app, offsets)?,
        meta,
    )
}

fn flag(b: bool) -> u8 {
    b as u8
}

pub fn format_ran(r: &RanRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.ts.micros(),
        r.dir,
        r.rnti,
        r.prb,
        r.mcs,
        r.tbs_bits,
        flag(r.is_own_ue),
        flag(r.harq_retx),
        flag(r.rlc_retx),
        flag(r.proactive_grant)
    )
}

pub fn format_packet(p: &PacketRecord) -> String {
    format!(
        "{},{},{},{},{}",
        p.send_ts.micros(),
        p.recv_ts.micros(),
        p.dir,
        p.size_bytes,
        p.kind.as_str()
    )
}

pub fn format_app(a: &AppRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        a.ts.micros(),
        a.side,
        a.in_fps,
        a.out_fps,
        a.out_res_height,
        a.jitter_buffer_ms,
        a.target_bitrate_bps,
        a.pushback_rate_bps,
        a.gcc_state.as_str(),
        a.outstanding_bytes,
        a.cwnd_bytes,
        a.app_send_rate_bps
    )
}

fn write_lines<T>(mut w: impl Write, header: &str, items: &[T], fmt: impl Fn(&T) -> String) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for item in items {
        writeln!(w, "{}", fmt(item))?;
    }
    w.flush()
}

pub fn write_ran(w: impl Write, records: &[RanRecord]) -> std::io::Result<()> {
    write_lines(w, RAN_HEADER, records, format_ran)
}

pub fn write_packets(w: impl Write, records: &[PacketRecord]) -> std::io::Result<()> {
    write_lines(w, PKT_HEADER, records, format_packet)
}

pub fn write_app(w: impl Write, records: &[AppRecord]) -> std::io::Result<()> {
    write_lines(w, APP_HEADER, records, format_app)
}

/// File names used when a trace is written to a directory.
pub const RAN_FILE: &str = "ran.csv";
pub const PKT_FILE: &str = "pkt.csv";
pub const APP_FILE: &str = "app.csv";

/// Writes the canonical form of all three streams into `dir`.
pub fn write_trace_dir(dir: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| DominoError::io(dir, e))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p)
            .map(|f| BufWriter::with_capacity(1 << 16, f))
            .map_err(|e| DominoError::io(p, e))
    };
    let io = |name: &str, e: std::io::Error| DominoError::io(dir.join(name), e);
    write_ran(create(RAN_FILE)?, &trace.ran).map_err(|e| io(RAN_FILE, e))?;
    write_packets(create(PKT_FILE)?, &trace.packets).map_err(|e| io(PKT_FILE, e))?;
    write_app(create(APP_FILE)?, &trace.app).map_err(|e| io(APP_FILE, e))?;
    Ok(())
}
