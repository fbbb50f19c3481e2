//! Interpreter for compiled plans.

use super::ast::{BinOp, Expr, ExprKind, Func, Stream};
use super::compile::{DetectionPlan, SlotSel, CONSTANTS};
use crate::detect::select::{self, median_spacing_us, nearest_rank};
use crate::detect::DetectorConfig;
use crate::detect::FeatureVector;
use crate::graph::ChainMatcher;
use crate::trace::{
    bucket_mean, group_by_duration, AppRecord, Bucket, Direction, PacketKind, PacketRecord, RanRecord, Side, Timestamp,
    WindowView,
};

enum Rows<'a> {
    App(Vec<&'a AppRecord>),
    Ran(Vec<&'a RanRecord>),
    Pkt(Vec<&'a PacketRecord>),
}

struct Ctx<'v, 'a> {
    view: &'v WindowView<'a>,
    rows: Rows<'a>,
    cfg: &'v DetectorConfig,
}

#[derive(Debug, Clone)]
enum Val {
    S(f64),
    V(Vec<f64>),
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

fn truthy(x: f64) -> bool {
    x != 0.0
}

impl<'v, 'a> Ctx<'v, 'a> {
    fn len(&self) -> usize {
        match &self.rows {
            Rows::App(r) => r.len(),
            Rows::Ran(r) => r.len(),
            Rows::Pkt(r) => r.len(),
        }
    }

    fn timestamps(&self) -> Vec<Timestamp> {
        match &self.rows {
            Rows::App(r) => r.iter().map(|x| x.ts).collect(),
            Rows::Ran(r) => r.iter().map(|x| x.ts).collect(),
            Rows::Pkt(r) => r.iter().map(|x| x.send_ts).collect(),
        }
    }

    fn column(&self, name: &str) -> Vec<f64> {
        if name == "t_ms" {
            let origin = self.view.window.start.micros();
            return self
                .timestamps()
                .iter()
                .map(|t| (t.micros() as f64 - origin as f64) / 1e3)
                .collect();
        }
        match &self.rows {
            Rows::App(r) => r
                .iter()
                .map(|a| match name {
                    "in_fps" => a.in_fps,
                    "out_fps" => a.out_fps,
                    "out_res_height" => a.out_res_height as f64,
                    "jitter_buffer_ms" => a.jitter_buffer_ms,
                    "target_bitrate_bps" => a.target_bitrate_bps,
                    "pushback_rate_bps" => a.pushback_rate_bps,
                    "gcc_state" => gcc_code(a.gcc_state),
                    "outstanding_bytes" => a.outstanding_bytes as f64,
                    "cwnd_bytes" => a.cwnd_bytes as f64,
                    "app_send_rate_bps" => a.app_send_rate_bps,
                    _ => unreachable!("checked field {name}"),
                })
                .collect(),
            Rows::Ran(r) => match name {
                "rate_gap_bps" | "tbs_rate_bps" | "app_rate_bps" => self.ran_rates(r, name),
                _ => r
                    .iter()
                    .map(|x| match name {
                        "prb" => x.prb as f64,
                        "mcs" => x.mcs as f64,
                        "tbs_bits" => x.tbs_bits as f64,
                        "rnti" => x.rnti as f64,
                        "own" => b(x.is_own_ue),
                        "harq_retx" => b(x.harq_retx),
                        "rlc_retx" => b(x.rlc_retx),
                        "proactive_grant" => b(x.proactive_grant),
                        _ => unreachable!("checked field {name}"),
                    })
                    .collect(),
            },
            Rows::Pkt(r) => r
                .iter()
                .map(|p| match name {
                    "size_bytes" => p.size_bytes as f64,
                    "delay_ms" => p.one_way_delay_ms(),
                    _ => unreachable!("checked field {name}"),
                })
                .collect(),
        }
    }

    /// Physical rate from TBS over the median record spacing, application
    /// rate held from the sending client's last sample, and their gap.
    fn ran_rates(&self, rows: &[&RanRecord], name: &str) -> Vec<f64> {
        let ts: Vec<Timestamp> = rows.iter().map(|r| r.ts).collect();
        let spacing = median_spacing_us(&ts);
        let apps = [
            select::app_side(self.view, Side::Local),
            select::app_side(self.view, Side::Remote),
        ];
        let mut cursor = [0usize; 2];
        let mut held: [Option<f64>; 2] = [None, None];
        rows.iter()
            .map(|r| {
                let k = usize::from(r.dir.sender() == Side::Remote);
                while cursor[k] < apps[k].len() && apps[k][cursor[k]].ts <= r.ts {
                    held[k] = Some(apps[k][cursor[k]].app_send_rate_bps);
                    cursor[k] += 1;
                }
                let phy = spacing.map(|sp| r.tbs_bits as f64 / (sp as f64 / 1e6));
                match name {
                    "tbs_rate_bps" => phy.unwrap_or(f64::NAN),
                    "app_rate_bps" => held[k].unwrap_or(f64::NAN),
                    _ => match (held[k], phy) {
                        (Some(app), Some(p)) => app - p,
                        _ => f64::NAN,
                    },
                }
            })
            .collect()
    }

    fn param(&self, name: &str) -> f64 {
        self.cfg.get(name).expect("checked parameter")
    }

    fn constant(&self, e: &Expr) -> f64 {
        match self.eval(e) {
            Val::S(v) => v,
            Val::V(_) => unreachable!("checked constant"),
        }
    }

    fn vec(&self, v: Val) -> Vec<f64> {
        match v {
            Val::S(x) => vec![x; self.len()],
            Val::V(v) => v,
        }
    }

    fn eval(&self, e: &Expr) -> Val {
        match &e.kind {
            ExprKind::Num(v) => Val::S(*v),
            ExprKind::Bool(x) => Val::S(b(*x)),
            ExprKind::Param(p) => Val::S(self.param(p)),
            ExprKind::Name(n) => match CONSTANTS.iter().find(|(c, _)| c == n) {
                Some((_, v)) => Val::S(*v),
                None => Val::V(self.column(n)),
            },
            ExprKind::Not(x) => map1(self.eval(x), |v| b(!truthy(v))),
            ExprKind::Neg(x) => map1(self.eval(x), |v| -v),
            ExprKind::Binary(op, l, r) => {
                let op = *op;
                map2(self.eval(l), self.eval(r), move |x, y| binop(op, x, y))
            }
            ExprKind::Call {
                func,
                args,
                named,
                filter,
            } => self.call(*func, args, named, filter.as_deref()),
        }
    }

    fn call(&self, func: Func, args: &[Expr], named: &[(String, Expr)], filter: Option<&Expr>) -> Val {
        if func == Func::Buckets {
            let values = self.vec(self.eval(&args[0]));
            let width_us = (self.constant(&named[0].1) * 1000.0).round().max(1.0) as u64;
            let p = self.constant(&named[1].1);
            let series: Vec<(Timestamp, f64)> = self.timestamps().into_iter().zip(values).collect();
            let groups = group_by_duration(&series, self.view.window.start, width_us);
            return Val::V(groups.iter().map(|g| nearest_rank(g, p).unwrap_or(f64::NAN)).collect());
        }
        let mut xs = self.vec(self.eval(&args[0]));
        if let Some(p) = filter {
            let keep = self.vec(self.eval(p));
            xs = xs
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| truthy(*k))
                .map(|(x, _)| x)
                .collect();
        }
        let n = xs.len();
        Val::S(match func {
            Func::Exists => b(xs.iter().any(|&x| truthy(x))),
            Func::Forall => b(xs.iter().all(|&x| truthy(x))),
            Func::Count => xs.iter().filter(|&&x| truthy(x)).count() as f64,
            Func::Frac => {
                if n == 0 {
                    0.0
                } else {
                    xs.iter().filter(|&&x| truthy(x)).count() as f64 / n as f64
                }
            }
            Func::Max => extreme(&xs, f64::max),
            Func::Min => extreme(&xs, f64::min),
            Func::Sum => xs.iter().sum(),
            Func::Mean => {
                if n == 0 {
                    f64::NAN
                } else {
                    xs.iter().sum::<f64>() / n as f64
                }
            }
            Func::Argmax => arg_by(&xs, |a, b| a > b),
            Func::Argmin => arg_by(&xs, |a, b| a < b),
            Func::Percentile => nearest_rank(&xs, self.constant(&args[1])).unwrap_or(f64::NAN),
            Func::AdjacentDrop => b(xs.windows(2).any(|w| w[1] < w[0])),
            Func::AdjacentRise => b(xs.windows(2).any(|w| w[1] > w[0])),
            Func::Changes => b(xs.windows(2).any(|w| w[1] != w[0])),
            Func::TrendUp => {
                let len = self.constant(&named[0].1).round().max(1.0) as usize;
                let series: Vec<(Timestamp, f64)> = xs.into_iter().map(|x| (Timestamp::ZERO, x)).collect();
                let means = bucket_mean(&series, Bucket::Count(len));
                b(means.windows(2).any(|w| w[1] > w[0]))
            }
            Func::Buckets => unreachable!("handled above"),
        })
    }
}

fn gcc_code(s: crate::trace::GccState) -> f64 {
    CONSTANTS
        .iter()
        .find(|(c, _)| *c == s.as_str())
        .map(|(_, v)| *v)
        .expect("every gcc state has a constant")
}

fn extreme(xs: &[f64], f: fn(f64, f64) -> f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().copied().reduce(f).expect("non-empty")
}

/// Index of the first element preferred by `better`.
fn arg_by(xs: &[f64], better: fn(f64, f64) -> bool) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut best = 0;
    for i in 1..xs.len() {
        if better(xs[i], xs[best]) {
            best = i;
        }
    }
    best as f64
}

fn binop(op: BinOp, x: f64, y: f64) -> f64 {
    match op {
        BinOp::Or => b(truthy(x) || truthy(y)),
        BinOp::And => b(truthy(x) && truthy(y)),
        BinOp::Eq => b(x == y),
        BinOp::Ne => b(x != y),
        BinOp::Lt => b(x < y),
        BinOp::Le => b(x <= y),
        BinOp::Gt => b(x > y),
        BinOp::Ge => b(x >= y),
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => x / y,
    }
}

fn map1(v: Val, f: impl Fn(f64) -> f64) -> Val {
    match v {
        Val::S(x) => Val::S(f(x)),
        Val::V(xs) => Val::V(xs.into_iter().map(f).collect()),
    }
}

fn map2(a: Val, b: Val, f: impl Fn(f64, f64) -> f64) -> Val {
    match (a, b) {
        (Val::S(x), Val::S(y)) => Val::S(f(x, y)),
        (Val::S(x), Val::V(ys)) => Val::V(ys.into_iter().map(|y| f(x, y)).collect()),
        (Val::V(xs), Val::S(y)) => Val::V(xs.into_iter().map(|x| f(x, y)).collect()),
        (Val::V(xs), Val::V(ys)) => Val::V(xs.into_iter().zip(ys).map(|(x, y)| f(x, y)).collect()),
    }
}

fn select<'a>(view: &WindowView<'a>, stream: Stream, sel: SlotSel, media_dir: Direction) -> Rows<'a> {
    let dir = match sel {
        SlotSel::Dir(d) => Some(d),
        SlotSel::RelDir(false) => Some(media_dir),
        SlotSel::RelDir(true) => Some(media_dir.opposite()),
        _ => None,
    };
    match stream {
        Stream::App => {
            let side = match sel {
                SlotSel::Side(s) => s,
                SlotSel::SideRole(r) => r.resolve(media_dir),
                _ => unreachable!("app slots select a side"),
            };
            Rows::App(select::app_side(view, side))
        }
        Stream::Ran => Rows::Ran(select::own_ran(view, dir)),
        Stream::Cell => Rows::Ran(select::cell_ran(view, dir)),
        Stream::Media => Rows::Pkt(select::packets(view, PacketKind::Media, dir)),
        Stream::Rtcp => Rows::Pkt(select::packets(view, PacketKind::Rtcp, dir)),
    }
}

impl DetectionPlan {
    /// Evaluates one feature slot. Conditions over an empty selection are
    /// false.
    pub fn evaluate_slot(
        &self,
        slot: usize,
        view: &WindowView<'_>,
        media_dir: Direction,
        cfg: &DetectorConfig,
    ) -> bool {
        let s = &self.slots[slot];
        let ev = &self.events[s.event];
        let ctx = Ctx {
            view,
            rows: select(view, ev.stream, s.sel, media_dir),
            cfg,
        };
        if ctx.len() == 0 {
            return false;
        }
        match ctx.eval(&ev.cond) {
            Val::S(v) => truthy(v),
            Val::V(_) => unreachable!("checked window-level condition"),
        }
    }

    /// All slots of the plan for one window and media direction.
    pub fn evaluate(&self, view: &WindowView<'_>, media_dir: Direction, cfg: &DetectorConfig) -> FeatureVector {
        FeatureVector::from_bits(
            (0..self.slots.len())
                .map(|i| self.evaluate_slot(i, view, media_dir, cfg))
                .collect(),
        )
    }

    pub fn matcher(&self) -> ChainMatcher {
        ChainMatcher::new(self.graph.clone(), self.chains.clone())
    }
}
