//! Syntax tree of a chain spec and its canonical text rendering.

use std::fmt;

use super::lexer::Pos;
use crate::graph::{DirRole, NodeKind, SideRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    App,
    Ran,
    Cell,
    Media,
    Rtcp,
}

impl Stream {
    pub const ALL: [Stream; 5] = [Stream::App, Stream::Ran, Stream::Cell, Stream::Media, Stream::Rtcp];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::App => "app",
            Stream::Ran => "ran",
            Stream::Cell => "cell",
            Stream::Media => "media",
            Stream::Rtcp => "rtcp",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SideSpec {
    Local,
    Remote,
    Each,
    Sender,
    Receiver,
}

impl SideSpec {
    const ALL: [SideSpec; 5] = [
        SideSpec::Local,
        SideSpec::Remote,
        SideSpec::Each,
        SideSpec::Sender,
        SideSpec::Receiver,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SideSpec::Local => "local",
            SideSpec::Remote => "remote",
            SideSpec::Each => "each",
            SideSpec::Sender => "sender",
            SideSpec::Receiver => "receiver",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirSpec {
    Ul,
    Dl,
    Each,
    Fwd,
    Rev,
    Any,
}

impl DirSpec {
    const ALL: [DirSpec; 6] = [
        DirSpec::Ul,
        DirSpec::Dl,
        DirSpec::Each,
        DirSpec::Fwd,
        DirSpec::Rev,
        DirSpec::Any,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DirSpec::Ul => "ul",
            DirSpec::Dl => "dl",
            DirSpec::Each => "each",
            DirSpec::Fwd => "fwd",
            DirSpec::Rev => "rev",
            DirSpec::Any => "any",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

pub fn node_kind_from_name(s: &str) -> Option<NodeKind> {
    [NodeKind::Cause, NodeKind::Intermediate, NodeKind::Consequence]
        .into_iter()
        .find(|k| k.as_str() == s)
}

pub fn side_role_name(r: SideRole) -> &'static str {
    match r {
        SideRole::Sender => "sender",
        SideRole::Receiver => "receiver",
        SideRole::Local => "local",
        SideRole::Remote => "remote",
    }
}

pub fn side_role_from_name(s: &str) -> Option<SideRole> {
    [SideRole::Sender, SideRole::Receiver, SideRole::Local, SideRole::Remote]
        .into_iter()
        .find(|r| side_role_name(*r) == s)
}

pub fn dir_role_name(r: DirRole) -> &'static str {
    match r {
        DirRole::Path => "path",
        DirRole::Forward => "fwd",
        DirRole::Reverse => "rev",
        DirRole::Ul => "ul",
        DirRole::Dl => "dl",
    }
}

pub fn dir_role_from_name(s: &str) -> Option<DirRole> {
    [
        DirRole::Path,
        DirRole::Forward,
        DirRole::Reverse,
        DirRole::Ul,
        DirRole::Dl,
    ]
    .into_iter()
    .find(|r| dir_role_name(*r) == s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exists,
    Forall,
    Count,
    Frac,
    Max,
    Min,
    Sum,
    Mean,
    Argmax,
    Argmin,
    Percentile,
    AdjacentDrop,
    AdjacentRise,
    TrendUp,
    Changes,
    Buckets,
}

impl Func {
    pub const ALL: [Func; 16] = [
        Func::Exists,
        Func::Forall,
        Func::Count,
        Func::Frac,
        Func::Max,
        Func::Min,
        Func::Sum,
        Func::Mean,
        Func::Argmax,
        Func::Argmin,
        Func::Percentile,
        Func::AdjacentDrop,
        Func::AdjacentRise,
        Func::TrendUp,
        Func::Changes,
        Func::Buckets,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Func::Exists => "exists",
            Func::Forall => "forall",
            Func::Count => "count",
            Func::Frac => "frac",
            Func::Max => "max",
            Func::Min => "min",
            Func::Sum => "sum",
            Func::Mean => "mean",
            Func::Argmax => "argmax",
            Func::Argmin => "argmin",
            Func::Percentile => "percentile",
            Func::AdjacentDrop => "adjacent_drop",
            Func::AdjacentRise => "adjacent_rise",
            Func::TrendUp => "trend_up",
            Func::Changes => "changes",
            Func::Buckets => "buckets",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Number of positional arguments.
    pub fn arity(self) -> usize {
        if self == Func::Percentile {
            2
        } else {
            1
        }
    }

    /// Allowed named arguments; all are required.
    pub fn named_args(self) -> &'static [&'static str] {
        match self {
            Func::TrendUp => &["bucket"],
            Func::Buckets => &["ms", "p"],
            _ => &[],
        }
    }

    /// Whether `agg(x where pred)` is accepted.
    pub fn takes_filter(self) -> bool {
        matches!(
            self,
            Func::Exists
                | Func::Forall
                | Func::Count
                | Func::Frac
                | Func::Max
                | Func::Min
                | Func::Sum
                | Func::Mean
                | Func::Percentile
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn prec(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.prec() == 4
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::Or | BinOp::And)
    }
}

const PREC_NOT: u8 = 3;
const PREC_NEG: u8 = 7;
const PREC_ATOM: u8 = 8;

/// Expression node. Equality ignores source positions.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Bool(bool),
    Param(String),
    /// A field of the event's stream or a named constant.
    Name(String),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call {
        func: Func,
        args: Vec<Expr>,
        named: Vec<(String, Expr)>,
        filter: Option<Box<Expr>>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    fn prec(&self) -> u8 {
        match &self.kind {
            ExprKind::Binary(op, ..) => op.prec(),
            ExprKind::Not(_) => PREC_NOT,
            ExprKind::Neg(_) => PREC_NEG,
            _ => PREC_ATOM,
        }
    }

    fn fmt_min(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.prec() < min {
            write!(f, "(")?;
            self.fmt_inner(f)?;
            write!(f, ")")
        } else {
            self.fmt_inner(f)
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => write!(f, "{v}"),
            ExprKind::Bool(b) => write!(f, "{b}"),
            ExprKind::Param(p) => write!(f, "${p}"),
            ExprKind::Name(n) => write!(f, "{n}"),
            ExprKind::Not(e) => {
                write!(f, "not ")?;
                e.fmt_min(f, PREC_NOT)
            }
            ExprKind::Neg(e) => {
                write!(f, "-")?;
                e.fmt_min(f, PREC_NEG)
            }
            ExprKind::Binary(op, l, r) => {
                let p = op.prec();
                // comparisons do not chain; arithmetic and logic associate left
                let lmin = if op.is_comparison() { p + 1 } else { p };
                l.fmt_min(f, lmin)?;
                write!(f, " {} ", op.as_str())?;
                r.fmt_min(f, p + 1)
            }
            ExprKind::Call {
                func,
                args,
                named,
                filter,
            } => {
                write!(f, "{}(", func.as_str())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.fmt_inner(f)?;
                    if i == 0 {
                        if let Some(p) = filter {
                            write!(f, " where ")?;
                            p.fmt_inner(f)?;
                        }
                    }
                }
                for (k, v) in named {
                    write!(f, ", {k}=")?;
                    v.fmt_inner(f)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_inner(f)
    }
}

#[derive(Debug, Clone)]
pub struct Name {
    pub text: String,
    pub pos: Pos,
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Name {
    pub fn new(text: impl Into<String>, pos: Pos) -> Self {
        Name { text: text.into(), pos }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDef {
    pub name: Name,
    pub stream: Stream,
    pub side: Option<SideSpec>,
    pub dir: Option<DirSpec>,
    pub cond: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDef {
    pub name: Name,
    pub kind: NodeKind,
    pub event: Name,
    pub side: Option<SideRole>,
    pub dir: Option<DirRole>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Event(EventDef),
    Node(NodeDef),
    Edge(Name, Name),
    /// Every cause-to-consequence path of the graph.
    ChainsAll,
    Chain {
        name: Name,
        path: Vec<Name>,
    },
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Event(e) => {
                write!(f, "event {} on {}", e.name.text, e.stream.as_str())?;
                if let Some(s) = e.side {
                    write!(f, " side {}", s.as_str())?;
                }
                if let Some(d) = e.dir {
                    write!(f, " dir {}", d.as_str())?;
                }
                write!(f, ": {}", e.cond)
            }
            Item::Node(n) => {
                write!(f, "node {} {} = {}", n.name.text, n.kind.as_str(), n.event.text)?;
                if let Some(s) = n.side {
                    write!(f, " side {}", side_role_name(s))?;
                }
                if let Some(d) = n.dir {
                    write!(f, " dir {}", dir_role_name(d))?;
                }
                Ok(())
            }
            Item::Edge(a, b) => write!(f, "edge {} -> {}", a.text, b.text),
            Item::ChainsAll => write!(f, "chains all"),
            Item::Chain { name, path } => {
                let p: Vec<&str> = path.iter().map(|n| n.text.as_str()).collect();
                write!(f, "chain {}: {}", name.text, p.join(" -> "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpecAst {
    pub items: Vec<Item>,
}

impl SpecAst {
    pub fn events(&self) -> impl Iterator<Item = &EventDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Node(n) => Some(n),
            _ => None,
        })
    }
}

impl fmt::Display for SpecAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            writeln!(f, "{item}")?;
        }
        Ok(())
    }
}
