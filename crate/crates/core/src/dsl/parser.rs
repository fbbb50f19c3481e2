//! Recursive-descent parser producing a [`SpecAst`].

use super::ast::*;
use super::diag::Diagnostic;
use super::lexer::{tokenize, Pos, Tok, Token};

const STATEMENT_KEYWORDS: [&str; 5] = ["event", "node", "edge", "chain", "chains"];
const RESERVED: [&str; 6] = ["and", "or", "not", "where", "true", "false"];

pub fn parse(src: &str) -> Result<SpecAst, Diagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, at: 0 };
    let mut items = Vec::new();
    while p.peek() != &Tok::Eof {
        items.push(p.item()?);
    }
    Ok(SpecAst { items })
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if t.tok != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        self.pos()
            .error(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<Pos> {
        if self.is_keyword(kw) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    /// A user-chosen name: any identifier except reserved words.
    fn name(&mut self, what: &str) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !STATEMENT_KEYWORDS.contains(&s.as_str()) && !RESERVED.contains(&s.as_str()) => {
                let pos = self.bump().pos;
                Ok(Name::new(s, pos))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// An identifier from a fixed vocabulary.
    fn word<T>(&mut self, what: &str, lookup: impl Fn(&str) -> Option<T>) -> PResult<T> {
        if let Tok::Ident(s) = self.peek() {
            if let Some(v) = lookup(s) {
                self.bump();
                return Ok(v);
            }
            return Err(self.pos().error(format!("unknown {what} `{s}`")));
        }
        Err(self.unexpected(what))
    }

    fn item(&mut self) -> PResult<Item> {
        match self.peek() {
            Tok::Ident(s) if s == "event" => self.event(),
            Tok::Ident(s) if s == "node" => self.node(),
            Tok::Ident(s) if s == "edge" => {
                self.bump();
                let a = self.name("node name")?;
                self.expect(Tok::Arrow, "`->`")?;
                let b = self.name("node name")?;
                Ok(Item::Edge(a, b))
            }
            Tok::Ident(s) if s == "chains" => {
                self.bump();
                self.keyword("all")?;
                Ok(Item::ChainsAll)
            }
            Tok::Ident(s) if s == "chain" => {
                self.bump();
                let name = self.name("chain name")?;
                self.expect(Tok::Colon, "`:`")?;
                let mut path = vec![self.name("node name")?];
                while *self.peek() == Tok::Arrow {
                    self.bump();
                    path.push(self.name("node name")?);
                }
                if path.len() < 2 {
                    return Err(name.pos.error("a chain needs at least two nodes"));
                }
                Ok(Item::Chain { name, path })
            }
            _ => Err(self.unexpected("`event`, `node`, `edge`, `chain` or `chains`")),
        }
    }

    fn event(&mut self) -> PResult<Item> {
        self.keyword("event")?;
        let name = self.name("event name")?;
        self.keyword("on")?;
        let stream = self.word("stream", Stream::from_name)?;
        let mut side = None;
        let mut dir = None;
        if self.is_keyword("side") {
            self.bump();
            side = Some(self.word("side", SideSpec::from_name)?);
        }
        if self.is_keyword("dir") {
            self.bump();
            dir = Some(self.word("direction", DirSpec::from_name)?);
        }
        self.expect(Tok::Colon, "`:`")?;
        let cond = self.expr()?;
        Ok(Item::Event(EventDef {
            name,
            stream,
            side,
            dir,
            cond,
        }))
    }

    fn node(&mut self) -> PResult<Item> {
        self.keyword("node")?;
        let name = self.name("node name")?;
        let kind = self.word("node kind", node_kind_from_name)?;
        self.expect(Tok::Assign, "`=`")?;
        let event = self.name("event name")?;
        let mut side = None;
        let mut dir = None;
        if self.is_keyword("side") {
            self.bump();
            side = Some(self.word("side role", side_role_from_name)?);
        }
        if self.is_keyword("dir") {
            self.bump();
            dir = Some(self.word("direction role", dir_role_from_name)?);
        }
        Ok(Item::Node(NodeDef {
            name,
            kind,
            event,
            side,
            dir,
        }))
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Ident(s) if s == "or" => BinOp::Or,
            Tok::Ident(s) if s == "and" => BinOp::And,
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            _ => return None,
        })
    }

    /// Precedence climbing over binary operators at level `min` and above.
    fn binary(&mut self, min: u8) -> PResult<Expr> {
        let mut lhs = if min <= 3 && self.is_keyword("not") {
            let pos = self.bump().pos;
            let e = self.binary(3)?;
            Expr::new(ExprKind::Not(Box::new(e)), pos)
        } else if min <= 3 {
            self.binary(4)?
        } else {
            self.unary()?
        };
        while let Some(op) = self.binop() {
            let p = op.prec();
            if p < min {
                break;
            }
            let pos = self.bump().pos;
            let rhs = self.binary(p + 1)?;
            if op.is_comparison() {
                if let Some(next) = self.binop().filter(|o| o.is_comparison()) {
                    return Err(self.pos().error(format!(
                        "comparisons do not chain; parenthesize before `{}`",
                        next.as_str()
                    )));
                }
            }
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let pos = self.bump().pos;
            let e = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(e)), pos));
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Num(v), pos))
            }
            Tok::Param(p) => {
                self.bump();
                Ok(Expr::new(ExprKind::Param(p), pos))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(s == "true"), pos))
            }
            Tok::Ident(s) => {
                if let Some(func) = Func::from_name(&s) {
                    if self.tokens[self.at + 1].tok == Tok::LParen {
                        self.bump();
                        return self.call(func, pos);
                    }
                }
                if STATEMENT_KEYWORDS.contains(&s.as_str()) || RESERVED.contains(&s.as_str()) {
                    return Err(self.unexpected("an expression"));
                }
                self.bump();
                if *self.peek() == Tok::LParen {
                    return Err(pos.error(format!("unknown function `{s}`")));
                }
                Ok(Expr::new(ExprKind::Name(s), pos))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    fn call(&mut self, func: Func, pos: Pos) -> PResult<Expr> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        let mut filter = None;
        if self.is_keyword("where") {
            let wpos = self.bump().pos;
            if !func.takes_filter() {
                return Err(wpos.error(format!("`{}` does not accept `where`", func.as_str())));
            }
            filter = Some(Box::new(self.expr()?));
        }
        let mut named: Vec<(String, Expr)> = Vec::new();
        while *self.peek() == Tok::Comma {
            self.bump();
            let is_named = matches!(self.peek(), Tok::Ident(_)) && self.tokens[self.at + 1].tok == Tok::Assign;
            if is_named {
                let key = self.bump();
                let Tok::Ident(k) = key.tok else { unreachable!() };
                if !func.named_args().contains(&k.as_str()) {
                    return Err(key.pos.error(format!("`{}` has no argument `{k}`", func.as_str())));
                }
                if named.iter().any(|(n, _)| *n == k) {
                    return Err(key.pos.error(format!("argument `{k}` given twice")));
                }
                self.bump();
                named.push((k, self.expr()?));
            } else {
                if !named.is_empty() {
                    return Err(self.pos().error("positional argument after named argument"));
                }
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(pos.error(format!(
                "`{}` takes {} positional argument(s), got {}",
                func.as_str(),
                func.arity(),
                args.len()
            )));
        }
        // canonical order of named arguments
        let mut ordered = Vec::new();
        for want in func.named_args() {
            match named.iter().position(|(n, _)| n == want) {
                Some(i) => ordered.push(named.remove(i)),
                None => {
                    return Err(pos.error(format!("`{}` requires `{want}=`", func.as_str())));
                }
            }
        }
        Ok(Expr::new(
            ExprKind::Call {
                func,
                args,
                named: ordered,
                filter,
            },
            pos,
        ))
    }
}
