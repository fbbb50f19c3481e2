//! Semantic checks and lowering of a [`SpecAst`] to a [`DetectionPlan`].

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::diag::Diagnostic;
use super::lexer::Pos;
use super::parser::parse;
use crate::detect::CONFIG_KEYS;
use crate::graph::{enumerate_chains, CausalGraph, CausalNode, ChainPath, DirRole, SideRole, SlotBinding};
use crate::trace::{Direction, Side};

pub const BUILTIN_SPEC: &str = include_str!("builtin.dsl");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Num,
    Bool,
}

/// Fields readable on each stream.
pub fn stream_fields(stream: Stream) -> &'static [(&'static str, FieldKind)] {
    use FieldKind::*;
    match stream {
        Stream::App => &[
            ("t_ms", Num),
            ("in_fps", Num),
            ("out_fps", Num),
            ("out_res_height", Num),
            ("jitter_buffer_ms", Num),
            ("target_bitrate_bps", Num),
            ("pushback_rate_bps", Num),
            ("gcc_state", Num),
            ("outstanding_bytes", Num),
            ("cwnd_bytes", Num),
            ("app_send_rate_bps", Num),
        ],
        Stream::Ran | Stream::Cell => &[
            ("t_ms", Num),
            ("prb", Num),
            ("mcs", Num),
            ("tbs_bits", Num),
            ("rnti", Num),
            ("own", Bool),
            ("harq_retx", Bool),
            ("rlc_retx", Bool),
            ("proactive_grant", Bool),
            ("rate_gap_bps", Num),
            ("tbs_rate_bps", Num),
            ("app_rate_bps", Num),
        ],
        Stream::Media | Stream::Rtcp => &[("t_ms", Num), ("size_bytes", Num), ("delay_ms", Num)],
    }
}

/// Named numeric constants usable in any expression.
pub const CONSTANTS: [(&str, f64); 3] = [("normal", 0.0), ("overuse", 1.0), ("underuse", 2.0)];

/// How a feature slot picks its records, relative to the media direction
/// under analysis where applicable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotSel {
    Side(Side),
    SideRole(SideRole),
    Dir(Direction),
    /// Media direction (`false`) or its opposite (`true`).
    RelDir(bool),
    AnyDir,
}

#[derive(Debug, Clone)]
pub struct PlanSlot {
    pub event: usize,
    pub sel: SlotSel,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct CompiledEvent {
    pub name: String,
    pub stream: Stream,
    pub cond: Expr,
    pub slots: Vec<usize>,
    /// Reads the reverse path relative to the media stream.
    pub reverse: bool,
}

/// Executable result of compiling a spec: feature-slot layout, event
/// conditions, causal graph and the chain set to match.
#[derive(Debug, Clone)]
pub struct DetectionPlan {
    pub ast: SpecAst,
    pub events: Vec<CompiledEvent>,
    pub slots: Vec<PlanSlot>,
    pub graph: CausalGraph,
    pub chains: Vec<ChainPath>,
}

impl DetectionPlan {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_labels(&self) -> Vec<String> {
        self.slots.iter().map(|s| s.label.clone()).collect()
    }

    pub fn event(&self, name: &str) -> Option<&CompiledEvent> {
        self.events.iter().find(|e| e.name == name)
    }
}

pub fn builtin_ast() -> SpecAst {
    parse(BUILTIN_SPEC).expect("built-in spec parses")
}

pub fn builtin_plan() -> DetectionPlan {
    compile_standalone(&builtin_ast()).expect("built-in spec compiles")
}

/// Compiles user definitions on top of the built-in events and graph. User
/// events take feature slots after the built-in ones; built-in names may be
/// referenced but not redefined.
pub fn compile(ast: &SpecAst) -> Result<DetectionPlan, Diagnostic> {
    let base = builtin_ast();
    let taken_events: HashSet<&str> = base.events().map(|e| e.name.text.as_str()).collect();
    let taken_nodes: HashSet<&str> = base.nodes().map(|n| n.name.text.as_str()).collect();
    for item in &ast.items {
        match item {
            Item::Event(e) if taken_events.contains(e.name.text.as_str()) => {
                return Err(redefined(&e.name, "event"));
            }
            Item::Node(n) if taken_nodes.contains(n.name.text.as_str()) => {
                return Err(redefined(&n.name, "node"));
            }
            _ => {}
        }
    }
    let mut merged = base.clone();
    merged.items.extend(ast.items.iter().cloned());
    compile_standalone(&merged)
}

fn redefined(name: &Name, what: &str) -> Diagnostic {
    name.pos.error(format!(
        "{what} `{}` is already defined by the built-in spec",
        name.text
    ))
}

/// Compiles a spec on its own, without the built-in definitions.
pub fn compile_standalone(ast: &SpecAst) -> Result<DetectionPlan, Diagnostic> {
    let mut events = Vec::new();
    let mut slots = Vec::new();
    let mut event_index: HashMap<&str, usize> = HashMap::new();
    for def in ast.events() {
        if event_index.contains_key(def.name.text.as_str()) {
            return Err(def.name.pos.error(format!("event `{}` defined twice", def.name.text)));
        }
        let compiled = compile_event(def, events.len(), &mut slots)?;
        event_index.insert(&def.name.text, events.len());
        events.push(compiled);
    }
    let (graph, node_pos) = build_graph(ast, &events, &event_index, &slots)?;
    let chains = chain_set(ast, &graph, &node_pos)?;
    Ok(DetectionPlan {
        ast: ast.clone(),
        events,
        slots,
        graph,
        chains,
    })
}

fn compile_event(def: &EventDef, index: usize, slots: &mut Vec<PlanSlot>) -> Result<CompiledEvent, Diagnostic> {
    let name = &def.name.text;
    let pos = def.name.pos;
    let is_app = def.stream == Stream::App;
    if is_app && def.dir.is_some() {
        return Err(pos.error(format!(
            "event `{name}`: `dir` does not apply to the app stream; use `side`"
        )));
    }
    if !is_app && def.side.is_some() {
        return Err(pos.error(format!("event `{name}`: `side` applies only to the app stream")));
    }
    let sels: Vec<(SlotSel, Option<&str>)> = if is_app {
        match def.side.unwrap_or(SideSpec::Each) {
            SideSpec::Each => vec![
                (SlotSel::Side(Side::Local), Some("local")),
                (SlotSel::Side(Side::Remote), Some("remote")),
            ],
            SideSpec::Local => vec![(SlotSel::Side(Side::Local), None)],
            SideSpec::Remote => vec![(SlotSel::Side(Side::Remote), None)],
            SideSpec::Sender => vec![(SlotSel::SideRole(SideRole::Sender), None)],
            SideSpec::Receiver => vec![(SlotSel::SideRole(SideRole::Receiver), None)],
        }
    } else {
        let default = match def.stream {
            Stream::Media | Stream::Rtcp => DirSpec::Fwd,
            _ => DirSpec::Each,
        };
        match def.dir.unwrap_or(default) {
            DirSpec::Each => vec![
                (SlotSel::Dir(Direction::Ul), Some("ul")),
                (SlotSel::Dir(Direction::Dl), Some("dl")),
            ],
            DirSpec::Ul => vec![(SlotSel::Dir(Direction::Ul), None)],
            DirSpec::Dl => vec![(SlotSel::Dir(Direction::Dl), None)],
            DirSpec::Fwd => vec![(SlotSel::RelDir(false), None)],
            DirSpec::Rev => vec![(SlotSel::RelDir(true), None)],
            DirSpec::Any => vec![(SlotSel::AnyDir, None)],
        }
    };
    let shape = check(&def.cond, def.stream)?;
    if shape.0 == Shape::Sample || matches!(shape.0, Shape::Buckets(_)) {
        return Err(def
            .cond
            .pos
            .error("condition is per record; wrap it in an aggregate such as exists(...) or count(...)"));
    }
    if shape.1 != Ty::Bool {
        return Err(def.cond.pos.error("condition must be boolean"));
    }
    let mut ids = Vec::new();
    for (sel, suffix) in sels {
        ids.push(slots.len());
        slots.push(PlanSlot {
            event: index,
            sel,
            label: match suffix {
                Some(s) => format!("{name}.{s}"),
                None => name.clone(),
            },
        });
    }
    Ok(CompiledEvent {
        name: name.clone(),
        stream: def.stream,
        cond: def.cond.clone(),
        slots: ids,
        reverse: def.dir == Some(DirSpec::Rev),
    })
}

/// Where an expression lives: a constant, a per-window scalar, one value
/// per record, or one value per time bucket (keyed by its rendering).
#[derive(Debug, Clone, PartialEq, Eq)]
enum Shape {
    Const,
    Scalar,
    Sample,
    Buckets(String),
}

fn join(a: &Shape, b: &Shape, pos: Pos) -> Result<Shape, Diagnostic> {
    use Shape::*;
    Ok(match (a, b) {
        (Const, x) | (x, Const) => x.clone(),
        (Scalar, x) | (x, Scalar) => x.clone(),
        (Sample, Sample) => Sample,
        (Buckets(x), Buckets(y)) if x == y => Buckets(x.clone()),
        (Buckets(_), Buckets(_)) => return Err(pos.error("cannot combine buckets of different widths")),
        _ => return Err(pos.error("cannot combine per-record values with per-bucket values")),
    })
}

fn expect_ty(got: Ty, want: Ty, pos: Pos, what: &str) -> Result<(), Diagnostic> {
    if got == want {
        Ok(())
    } else {
        let name = |t: Ty| if t == Ty::Num { "numeric" } else { "boolean" };
        Err(pos.error(format!("{what} must be {}, found {}", name(want), name(got))))
    }
}

fn check(e: &Expr, stream: Stream) -> Result<(Shape, Ty), Diagnostic> {
    Ok(match &e.kind {
        ExprKind::Num(_) => (Shape::Const, Ty::Num),
        ExprKind::Bool(_) => (Shape::Const, Ty::Bool),
        ExprKind::Param(p) => {
            if !CONFIG_KEYS.contains(&p.as_str()) {
                return Err(e
                    .pos
                    .error(format!("unknown parameter `${p}`; known: {}", CONFIG_KEYS.join(", "))));
            }
            (Shape::Const, Ty::Num)
        }
        ExprKind::Name(n) => {
            if let Some((_, k)) = stream_fields(stream).iter().find(|(f, _)| f == n) {
                let ty = if *k == FieldKind::Bool { Ty::Bool } else { Ty::Num };
                (Shape::Sample, ty)
            } else if CONSTANTS.iter().any(|(c, _)| c == n) {
                (Shape::Const, Ty::Num)
            } else {
                return Err(e
                    .pos
                    .error(format!("unknown field `{n}` on stream `{}`", stream.as_str())));
            }
        }
        ExprKind::Not(x) => {
            let (s, t) = check(x, stream)?;
            expect_ty(t, Ty::Bool, x.pos, "operand of `not`")?;
            (s, Ty::Bool)
        }
        ExprKind::Neg(x) => {
            let (s, t) = check(x, stream)?;
            expect_ty(t, Ty::Num, x.pos, "operand of `-`")?;
            (s, Ty::Num)
        }
        ExprKind::Binary(op, l, r) => {
            let (ls, lt) = check(l, stream)?;
            let (rs, rt) = check(r, stream)?;
            let want = if op.is_logical() { Ty::Bool } else { Ty::Num };
            let what = format!("operand of `{}`", op.as_str());
            expect_ty(lt, want, l.pos, &what)?;
            expect_ty(rt, want, r.pos, &what)?;
            let shape = join(&ls, &rs, e.pos)?;
            let ty = if op.is_logical() || op.is_comparison() {
                Ty::Bool
            } else {
                Ty::Num
            };
            (shape, ty)
        }
        ExprKind::Call {
            func,
            args,
            named,
            filter,
        } => check_call(*func, args, named, filter.as_deref(), stream)?,
    })
}

fn check_const(e: &Expr, stream: Stream, what: &str) -> Result<(), Diagnostic> {
    let (s, t) = check(e, stream)?;
    expect_ty(t, Ty::Num, e.pos, what)?;
    if s != Shape::Const {
        return Err(e.pos.error(format!("{what} must be a constant")));
    }
    Ok(())
}

fn check_call(
    func: Func,
    args: &[Expr],
    named: &[(String, Expr)],
    filter: Option<&Expr>,
    stream: Stream,
) -> Result<(Shape, Ty), Diagnostic> {
    let arg = &args[0];
    let (shape, ty) = check(arg, stream)?;
    let fname = func.as_str();
    if let Some(p) = filter {
        let (ps, pt) = check(p, stream)?;
        expect_ty(pt, Ty::Bool, p.pos, "`where` predicate")?;
        if matches!(shape, Shape::Buckets(_)) || matches!(ps, Shape::Buckets(_)) {
            return Err(p.pos.error("`where` filters records, not buckets"));
        }
    }
    for (k, v) in named {
        check_const(v, stream, &format!("`{k}=` of `{fname}`"))?;
    }
    let what = format!("argument of `{fname}`");
    let out = match func {
        Func::Exists | Func::Forall => {
            expect_ty(ty, Ty::Bool, arg.pos, &what)?;
            Ty::Bool
        }
        Func::Count | Func::Frac => {
            expect_ty(ty, Ty::Bool, arg.pos, &what)?;
            Ty::Num
        }
        Func::Max | Func::Min | Func::Sum | Func::Mean | Func::Argmax | Func::Argmin => {
            expect_ty(ty, Ty::Num, arg.pos, &what)?;
            Ty::Num
        }
        Func::Percentile => {
            expect_ty(ty, Ty::Num, arg.pos, &what)?;
            check_const(&args[1], stream, "percentile rank")?;
            Ty::Num
        }
        Func::AdjacentDrop | Func::AdjacentRise | Func::Changes | Func::TrendUp => {
            expect_ty(ty, Ty::Num, arg.pos, &what)?;
            if !matches!(shape, Shape::Sample | Shape::Buckets(_)) {
                return Err(arg
                    .pos
                    .error(format!("`{fname}` needs a per-record or per-bucket series")));
            }
            Ty::Bool
        }
        Func::Buckets => {
            expect_ty(ty, Ty::Num, arg.pos, &what)?;
            if shape != Shape::Sample {
                return Err(arg.pos.error("`buckets` needs a per-record series"));
            }
            let key = named.iter().map(|(_, v)| v.to_string()).collect::<Vec<_>>().join(",");
            return Ok((Shape::Buckets(format!("{key}/{arg}")), Ty::Num));
        }
    };
    Ok((Shape::Scalar, out))
}

fn build_graph(
    ast: &SpecAst,
    events: &[CompiledEvent],
    event_index: &HashMap<&str, usize>,
    slots: &[PlanSlot],
) -> Result<(CausalGraph, HashMap<String, Pos>), Diagnostic> {
    let mut nodes: Vec<CausalNode> = Vec::new();
    let mut node_pos: HashMap<String, Pos> = HashMap::new();
    for def in ast.nodes() {
        if node_pos.contains_key(&def.name.text) {
            return Err(def.name.pos.error(format!("node `{}` defined twice", def.name.text)));
        }
        let Some(&ei) = event_index.get(def.event.text.as_str()) else {
            return Err(def.event.pos.error(format!("unknown event `{}`", def.event.text)));
        };
        let ev = &events[ei];
        let binding = node_binding(def, ev, slots)?;
        node_pos.insert(def.name.text.clone(), def.name.pos);
        nodes.push(CausalNode {
            id: def.name.text.clone(),
            kind: def.kind,
            event: ev.name.clone(),
            binding,
            reverse_path: ev.reverse,
        });
    }
    let kinds: HashMap<&str, crate::graph::NodeKind> = nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    for item in &ast.items {
        let Item::Edge(a, b) = item else { continue };
        for end in [a, b] {
            if !kinds.contains_key(end.text.as_str()) {
                return Err(end.pos.error(format!("unknown node `{}`", end.text)));
            }
        }
        if kinds[b.text.as_str()] == crate::graph::NodeKind::Cause {
            return Err(b.pos.error(format!("cause `{}` cannot have incoming edges", b.text)));
        }
        if kinds[a.text.as_str()] == crate::graph::NodeKind::Consequence {
            return Err(a
                .pos
                .error(format!("consequence `{}` cannot have outgoing edges", a.text)));
        }
        if edges.iter().any(|(x, y)| *x == a.text && *y == b.text) {
            return Err(a.pos.error(format!("duplicate edge {} -> {}", a.text, b.text)));
        }
        if a.text == b.text || reaches(&succ, &b.text, &a.text) {
            return Err(a.pos.error(format!("edge {} -> {} closes a cycle", a.text, b.text)));
        }
        succ.entry(a.text.as_str()).or_default().push(b.text.as_str());
        edges.push((a.text.clone(), b.text.clone()));
    }
    let graph = CausalGraph::new(nodes, edges).map_err(|e| Pos::default().error(e.to_string()))?;
    Ok((graph, node_pos))
}

fn reaches(succ: &HashMap<&str, Vec<&str>>, from: &str, to: &str) -> bool {
    let mut stack = vec![from];
    let mut seen = HashSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            if let Some(next) = succ.get(n) {
                stack.extend(next.iter().copied());
            }
        }
    }
    false
}

fn node_binding(def: &NodeDef, ev: &CompiledEvent, slots: &[PlanSlot]) -> Result<SlotBinding, Diagnostic> {
    let each_side = ev.slots.len() == 2 && matches!(slots[ev.slots[0]].sel, SlotSel::Side(_));
    let each_dir = ev.slots.len() == 2 && matches!(slots[ev.slots[0]].sel, SlotSel::Dir(_));
    if def.side.is_some() && !each_side {
        return Err(def.name.pos.error(format!(
            "node `{}`: `side` needs an event defined with `side each`",
            def.name.text
        )));
    }
    if def.dir.is_some() && !each_dir {
        return Err(def.name.pos.error(format!(
            "node `{}`: `dir` needs an event defined with `dir each`",
            def.name.text
        )));
    }
    Ok(if each_side {
        SlotBinding::BySide {
            local: ev.slots[0],
            remote: ev.slots[1],
            role: def.side.unwrap_or(SideRole::Sender),
        }
    } else if each_dir {
        SlotBinding::ByDir {
            ul: ev.slots[0],
            dl: ev.slots[1],
            role: def.dir.unwrap_or(DirRole::Path),
        }
    } else {
        SlotBinding::Fixed(ev.slots[0])
    })
}

fn chain_set(
    ast: &SpecAst,
    graph: &CausalGraph,
    node_pos: &HashMap<String, Pos>,
) -> Result<Vec<ChainPath>, Diagnostic> {
    use crate::graph::NodeKind;
    let mut explicit = BTreeSet::new();
    let mut names = HashSet::new();
    // without any chain statement every path is matched
    let all = ast.items.contains(&Item::ChainsAll) || !ast.items.iter().any(|i| matches!(i, Item::Chain { .. }));
    for item in &ast.items {
        if let Item::Chain { name, path } = item {
            if !names.insert(name.text.as_str()) {
                return Err(name.pos.error(format!("chain `{}` defined twice", name.text)));
            }
            let mut seen = HashSet::new();
            for n in path {
                if !node_pos.contains_key(&n.text) {
                    return Err(n.pos.error(format!("unknown node `{}`", n.text)));
                }
                if !seen.insert(n.text.as_str()) {
                    return Err(n
                        .pos
                        .error(format!("node `{}` repeats; a chain must be a simple path", n.text)));
                }
            }
            let first = &path[0];
            let last = path.last().expect("non-empty");
            if graph.node(&first.text).map(|n| n.kind) != Some(NodeKind::Cause) {
                return Err(first
                    .pos
                    .error(format!("chain must start at a cause, `{}` is not one", first.text)));
            }
            if graph.node(&last.text).map(|n| n.kind) != Some(NodeKind::Consequence) {
                return Err(last
                    .pos
                    .error(format!("chain must end at a consequence, `{}` is not one", last.text)));
            }
            for n in &path[1..path.len() - 1] {
                let k = graph.node(&n.text).map(|n| n.kind);
                if k != Some(NodeKind::Intermediate) {
                    return Err(n
                        .pos
                        .error(format!("`{}` inside a chain must be an intermediate node", n.text)));
                }
            }
            explicit.insert(ChainPath {
                nodes: path.iter().map(|n| n.text.clone()).collect(),
            });
        }
    }
    if all {
        let every = enumerate_chains(graph).map_err(|e| Pos::default().error(e.to_string()))?;
        explicit.extend(every);
    }
    Ok(explicit.into_iter().collect())
}
