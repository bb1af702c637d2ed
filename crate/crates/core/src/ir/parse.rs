//! Parser for the canonical UPIR text form.
//!
//! Accepts node fields in any order (printing re-canonicalizes), assigns node
//! ids in module pre-order, and resolves `%nK` references positionally. The
//! result is validated structurally before it is returned.

use crate::ast::{ArraySection, BinOp, DependMode, Expr, Intrinsic, Param, ReductionOp, ScalarType, SchedulePolicy, TaskPolicy, Type, VarRef};
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::BTreeMap;

pub fn parse_upir(text: &str) -> Result<Module> {
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0, next_id: 0 };
    let module = p.parse_module()?;
    canon::validate(&module)?;
    check_symbols(&module)?;
    Ok(module)
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum UTok {
    /// Identifier-ish word; dots and hyphens join (`upir.loop`, `read-only`).
    Word(String),
    Sym(String),
    Const(i64),
    FConst(f64),
    NodeRef(u32),
    FuncRef(String),
    Str(String),
    Int(i64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Eq,
    Arrow,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Eof,
}

#[derive(Debug, Clone)]
struct T {
    tok: UTok,
    pos: Pos,
}

fn lex(text: &str) -> Result<Vec<T>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    macro_rules! bump {
        () => {{
            if b[i] == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    let is_word = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    while i < b.len() {
        let pos = Pos::new(line, col);
        let c = b[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                bump!();
                continue;
            }
            b'/' if i + 1 < b.len() && b[i + 1] == b'/' => {
                while i < b.len() && b[i] != b'\n' {
                    bump!();
                }
                continue;
            }
            b'"' => {
                bump!();
                let mut s = String::new();
                while i < b.len() && b[i] != b'"' {
                    if b[i] == b'\\' && i + 1 < b.len() {
                        bump!();
                        match b[i] {
                            b'n' => s.push('\n'),
                            b't' => s.push('\t'),
                            other => s.push(other as char),
                        }
                    } else {
                        s.push(b[i] as char);
                    }
                    bump!();
                }
                if i >= b.len() {
                    return Err(Diag::new(pos, "unterminated string"));
                }
                bump!();
                out.push(T { tok: UTok::Str(s), pos });
            }
            b'%' => {
                bump!();
                // A `%` not followed by a name is the remainder operator.
                if i >= b.len() || !(b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    out.push(T { tok: UTok::Percent, pos });
                    continue;
                }
                let start = i;
                // %c-12, %f-1.5e3, %n7, or plain %name
                if b[i] == b'c' || b[i] == b'f' || b[i] == b'n' {
                    let tag = b[i];
                    let mut j = i + 1;
                    if tag != b'n' && j < b.len() && b[j] == b'-' {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        bump!(); // tag
                        let lit_start = i;
                        if b[i] == b'-' {
                            bump!();
                        }
                        while i < b.len() && b[i].is_ascii_digit() {
                            bump!();
                        }
                        if tag == b'f' {
                            if i < b.len() && b[i] == b'.' {
                                bump!();
                                while i < b.len() && b[i].is_ascii_digit() {
                                    bump!();
                                }
                            }
                            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                                bump!();
                                if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
                                    bump!();
                                }
                                while i < b.len() && b[i].is_ascii_digit() {
                                    bump!();
                                }
                            }
                        }
                        let lit = std::str::from_utf8(&b[lit_start..i]).unwrap();
                        let tok = match tag {
                            b'c' => UTok::Const(
                                lit.parse().map_err(|_| Diag::new(pos, format!("bad %c literal `{lit}`")))?,
                            ),
                            b'f' => UTok::FConst(
                                lit.parse().map_err(|_| Diag::new(pos, format!("bad %f literal `{lit}`")))?,
                            ),
                            _ => UTok::NodeRef(
                                lit.parse().map_err(|_| Diag::new(pos, format!("bad %n reference `{lit}`")))?,
                            ),
                        };
                        out.push(T { tok, pos });
                        continue;
                    }
                }
                if !(b[i].is_ascii_alphabetic() || b[i] == b'_') {
                    return Err(Diag::new(pos, "expected symbol name after `%`"));
                }
                while i < b.len() && is_word(b[i]) {
                    bump!();
                }
                out.push(T { tok: UTok::Sym(std::str::from_utf8(&b[start..i]).unwrap().to_string()), pos });
            }
            b'@' => {
                bump!();
                let start = i;
                while i < b.len() && is_word(b[i]) {
                    bump!();
                }
                out.push(T { tok: UTok::FuncRef(std::str::from_utf8(&b[start..i]).unwrap().to_string()), pos });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < b.len() && b[i].is_ascii_digit() {
                    bump!();
                }
                let lit = std::str::from_utf8(&b[start..i]).unwrap();
                out.push(T {
                    tok: UTok::Int(lit.parse().map_err(|_| Diag::new(pos, format!("bad integer `{lit}`")))?),
                    pos,
                });
            }
            _ if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < b.len() && is_word(b[i]) {
                    bump!();
                }
                // Join `.word` and `-word` segments into one name.
                while i < b.len()
                    && (b[i] == b'.' || b[i] == b'-')
                    && i + 1 < b.len()
                    && (b[i + 1].is_ascii_alphabetic() || b[i + 1] == b'_')
                {
                    bump!();
                    while i < b.len() && is_word(b[i]) {
                        bump!();
                    }
                }
                out.push(T { tok: UTok::Word(std::str::from_utf8(&b[start..i]).unwrap().to_string()), pos });
            }
            b'(' => {
                bump!();
                out.push(T { tok: UTok::LParen, pos });
            }
            b')' => {
                bump!();
                out.push(T { tok: UTok::RParen, pos });
            }
            b'{' => {
                bump!();
                out.push(T { tok: UTok::LBrace, pos });
            }
            b'}' => {
                bump!();
                out.push(T { tok: UTok::RBrace, pos });
            }
            b'[' => {
                bump!();
                out.push(T { tok: UTok::LBracket, pos });
            }
            b']' => {
                bump!();
                out.push(T { tok: UTok::RBracket, pos });
            }
            b',' => {
                bump!();
                out.push(T { tok: UTok::Comma, pos });
            }
            b':' => {
                bump!();
                out.push(T { tok: UTok::Colon, pos });
            }
            b'*' => {
                bump!();
                out.push(T { tok: UTok::Star, pos });
            }
            b'+' => {
                bump!();
                out.push(T { tok: UTok::Plus, pos });
            }
            b'-' => {
                bump!();
                if i < b.len() && b[i] == b'>' {
                    bump!();
                    out.push(T { tok: UTok::Arrow, pos });
                } else {
                    out.push(T { tok: UTok::Minus, pos });
                }
            }
            b'/' => {
                bump!();
                out.push(T { tok: UTok::Slash, pos });
            }
            b'=' => {
                bump!();
                if i < b.len() && b[i] == b'=' {
                    bump!();
                    out.push(T { tok: UTok::EqEq, pos });
                } else {
                    out.push(T { tok: UTok::Eq, pos });
                }
            }
            b'<' => {
                bump!();
                if i < b.len() && b[i] == b'=' {
                    bump!();
                    out.push(T { tok: UTok::Le, pos });
                } else {
                    out.push(T { tok: UTok::Lt, pos });
                }
            }
            b'>' => {
                bump!();
                if i < b.len() && b[i] == b'=' {
                    bump!();
                    out.push(T { tok: UTok::Ge, pos });
                } else {
                    out.push(T { tok: UTok::Gt, pos });
                }
            }
            b'!' => {
                bump!();
                if i < b.len() && b[i] == b'=' {
                    bump!();
                    out.push(T { tok: UTok::Ne, pos });
                } else {
                    return Err(Diag::new(pos, "unexpected `!`"));
                }
            }
            other => return Err(Diag::new(pos, format!("unexpected character `{}`", other as char))),
        }
    }
    out.push(T { tok: UTok::Eof, pos: Pos::new(line, col) });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<T>,
    i: usize,
    next_id: u32,
}

impl Parser {
    fn fresh(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn peek(&self) -> &UTok {
        &self.toks[self.i].tok
    }

    fn peek2(&self) -> &UTok {
        &self.toks[(self.i + 1).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> UTok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, t: &UTok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), UTok::Word(x) if x == w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: UTok, what: &str) -> Result<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}, found {:?}", self.peek())))
        }
    }

    fn expect_word(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            UTok::Word(w) => {
                self.bump();
                Ok(w)
            }
            other => Err(self.err(format!("expected {what}, found {other:?}"))),
        }
    }

    fn expect_sym(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            UTok::Sym(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err(format!("expected {what}, found {other:?}"))),
        }
    }

    fn expect_noderef(&mut self, what: &str) -> Result<NodeId> {
        match self.peek().clone() {
            UTok::NodeRef(k) => {
                self.bump();
                Ok(NodeId(k))
            }
            other => Err(self.err(format!("expected {what}, found {other:?}"))),
        }
    }

    fn err(&self, msg: String) -> Diag {
        Diag::new(self.pos(), msg)
    }

    fn parse_module(&mut self) -> Result<Module> {
        self.expect(UTok::Word("module".into()), "`module`")?;
        self.expect(UTok::LBrace, "`{`")?;
        let mut functions = Vec::new();
        while !self.eat(&UTok::RBrace) {
            functions.push(self.parse_function()?);
        }
        self.expect(UTok::Eof, "end of input")?;
        Ok(Module { functions })
    }

    fn parse_function(&mut self) -> Result<UpirFunction> {
        self.expect(UTok::Word("func".into()), "`func`")?;
        let name = match self.bump() {
            UTok::FuncRef(n) => n,
            other => return Err(self.err(format!("expected `@name`, found {other:?}"))),
        };
        self.expect(UTok::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.eat(&UTok::RParen) {
            loop {
                let pname = self.expect_sym("parameter symbol")?;
                self.expect(UTok::Colon, "`:`")?;
                let ty = self.parse_type()?;
                params.push(Param { name: pname, ty });
                if self.eat(&UTok::RParen) {
                    break;
                }
                self.expect(UTok::Comma, "`,`")?;
            }
        }
        let ret = if self.eat(&UTok::Arrow) { Some(self.parse_scalar_type()?) } else { None };
        let is_kernel = self.eat_word("kernel");
        self.expect(UTok::LBrace, "`{`")?;
        let body = self.parse_region()?;
        Ok(UpirFunction { name, params, ret, is_kernel, body })
    }

    fn parse_scalar_type(&mut self) -> Result<ScalarType> {
        let w = self.expect_word("type")?;
        match w.as_str() {
            "int" => Ok(ScalarType::Int),
            "float" => Ok(ScalarType::Float),
            "double" => Ok(ScalarType::Double),
            other => Err(self.err(format!("unknown type `{other}`"))),
        }
    }

    fn parse_type(&mut self) -> Result<Type> {
        let elem = self.parse_scalar_type()?;
        let mut rank = 0u8;
        while self.eat(&UTok::LBracket) {
            self.expect(UTok::RBracket, "`]`")?;
            rank += 1;
        }
        Ok(Type { elem, rank })
    }

    /// Parse ops until the closing brace of the current region.
    fn parse_region(&mut self) -> Result<Region> {
        let mut nodes = Vec::new();
        while !self.eat(&UTok::RBrace) {
            nodes.push(self.parse_op()?);
        }
        Ok(Region::new(nodes))
    }

    fn parse_op(&mut self) -> Result<Node> {
        let head = self.expect_word("operation")?;
        let id = self.fresh();
        let kind = match head.as_str() {
            "upir.spmd" => self.parse_spmd()?,
            "upir.loop" => self.parse_loop()?,
            "upir.task" => self.parse_task()?,
            "upir.data" => self.parse_data_region()?,
            "upir.data_movement" => self.parse_data_movement()?,
            "upir.data_update" => self.parse_data_update()?,
            "upir.mm_allocator" => self.parse_mm_alloc()?,
            "upir.mm_deallocator" => self.parse_mm_dealloc()?,
            "upir.sync" => self.parse_sync()?,
            "upir.ext" => self.parse_ext()?,
            "upir.if" => self.parse_if()?,
            "upir.for" => self.parse_base_for()?,
            "upir.decl" => self.parse_decl()?,
            "upir.assign" => self.parse_assign()?,
            "call" => self.parse_call()?,
            "upir.return" => {
                let v = if self.starts_expr() { Some(self.parse_expr()?) } else { None };
                NodeKind::Return(v)
            }
            other => return Err(self.err(format!("unknown operation `{other}`"))),
        };
        Ok(Node { id, kind })
    }

    fn parse_spmd(&mut self) -> Result<NodeKind> {
        let mut s = SpmdNode::default();
        loop {
            match self.peek().clone() {
                UTok::Word(w) => match w.as_str() {
                    "target" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        loop {
                            let t = self.expect_word("target platform")?;
                            s.targets.push(match t.as_str() {
                                "cpu" => TargetPlatform::Cpu,
                                "gpu" => TargetPlatform::Gpu,
                                "cluster" => TargetPlatform::Cluster,
                                other => return Err(self.err(format!("unknown target `{other}`"))),
                            });
                            if !self.eat(&UTok::Comma) {
                                break;
                            }
                        }
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "num_teams" => {
                        self.bump();
                        s.num_teams = Some(self.paren_expr()?);
                    }
                    "num_units" => {
                        self.bump();
                        s.num_units = Some(self.paren_expr()?);
                    }
                    "data" => {
                        self.bump();
                        s.data = self.paren_data_items()?;
                    }
                    "nested-parent" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        s.nested_parent = Some(self.expect_noderef("node reference")?);
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "nested-child" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        s.nested_child = Some(self.expect_noderef("node reference")?);
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "nested-level" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        s.nested_level = Some(self.parse_int()?);
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "branch" => {
                        self.bump();
                        s.branch = self.paren_noderefs()?;
                    }
                    "sync" => {
                        self.bump();
                        s.sync = self.paren_noderefs()?;
                    }
                    _ => return Err(self.err(format!("unknown spmd field `{w}`"))),
                },
                UTok::LBrace => break,
                other => return Err(self.err(format!("expected spmd field or `{{`, found {other:?}"))),
            }
        }
        self.expect(UTok::LBrace, "`{`")?;
        s.body = self.parse_region()?;
        Ok(NodeKind::Spmd(s))
    }

    fn parse_loop(&mut self) -> Result<NodeKind> {
        let mut induction = None;
        let mut lower = None;
        let mut upper = None;
        let mut step = None;
        let mut data = Vec::new();
        let mut collapse = 1i64;
        let mut sync = Vec::new();
        let mut nowait = false;
        loop {
            match self.peek().clone() {
                UTok::Word(w) => match w.as_str() {
                    "induction" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        induction = Some(self.expect_sym("induction symbol")?);
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "lowerBound" => {
                        self.bump();
                        lower = Some(self.paren_expr()?);
                    }
                    "upperBound" => {
                        self.bump();
                        upper = Some(self.paren_expr()?);
                    }
                    "step" => {
                        self.bump();
                        step = Some(self.paren_expr()?);
                    }
                    "data" => {
                        self.bump();
                        data = self.paren_data_items()?;
                    }
                    "collapse" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        collapse = self.parse_int()?;
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "sync" => {
                        self.bump();
                        sync = self.paren_noderefs()?;
                    }
                    "nowait" => {
                        self.bump();
                        nowait = true;
                    }
                    _ => return Err(self.err(format!("unknown loop field `{w}`"))),
                },
                UTok::LBrace => break,
                other => return Err(self.err(format!("expected loop field or `{{`, found {other:?}"))),
            }
        }
        self.expect(UTok::LBrace, "`{`")?;
        // An adjacent loop_parallel op annotates this loop and owns its body.
        let (parallel, body) = if matches!(self.peek(), UTok::Word(w) if w == "upir.loop_parallel" || w == "upir.loop-parallel")
        {
            self.bump();
            let lp = self.parse_lp()?;
            self.expect(UTok::LBrace, "`{`")?;
            let body = self.parse_region()?;
            self.expect(UTok::RBrace, "`}` closing the loop", )?;
            (Some(lp), body)
        } else {
            (None, self.parse_region()?)
        };
        Ok(NodeKind::Loop(LoopNode {
            induction: induction.ok_or_else(|| self.err("loop requires induction(..)".into()))?,
            lower: lower.ok_or_else(|| self.err("loop requires lowerBound(..)".into()))?,
            upper: upper.ok_or_else(|| self.err("loop requires upperBound(..)".into()))?,
            step: step.ok_or_else(|| self.err("loop requires step(..)".into()))?,
            data,
            collapse,
            sync,
            nowait,
            parallel,
            body,
        }))
    }

    fn parse_lp(&mut self) -> Result<LoopParallel> {
        let w = self.expect_word("loop parallelization kind")?;
        let kind = match w.as_str() {
            "worksharing" => {
                self.expect(UTok::LParen, "`(`")?;
                let mut schedule = SchedulePolicy::Static;
                let mut chunk = None;
                let mut distribute = DistributeTarget::Units;
                while let UTok::Word(f) = self.peek().clone() {
                    match f.as_str() {
                        "schedule" => {
                            self.bump();
                            self.expect(UTok::LParen, "`(`")?;
                            let p = self.expect_word("schedule policy")?;
                            schedule = match p.as_str() {
                                "static" => SchedulePolicy::Static,
                                "dynamic" => SchedulePolicy::Dynamic,
                                "guided" => SchedulePolicy::Guided,
                                "runtime" => SchedulePolicy::Runtime,
                                "auto" => SchedulePolicy::Auto,
                                other => return Err(self.err(format!("unknown schedule policy `{other}`"))),
                            };
                            if self.eat(&UTok::Comma) {
                                chunk = Some(self.parse_expr()?);
                            }
                            self.expect(UTok::RParen, "`)`")?;
                        }
                        "distribute" => {
                            self.bump();
                            self.expect(UTok::LParen, "`(`")?;
                            let first = self.expect_word("distribute target")?;
                            distribute = match first.as_str() {
                                "teams" => {
                                    if self.eat(&UTok::Comma) {
                                        let second = self.expect_word("`units`")?;
                                        if second != "units" {
                                            return Err(self.err("expected `units` after `teams,`".into()));
                                        }
                                        DistributeTarget::TeamsUnits
                                    } else {
                                        DistributeTarget::Teams
                                    }
                                }
                                "units" => DistributeTarget::Units,
                                other => return Err(self.err(format!("unknown distribute target `{other}`"))),
                            };
                            self.expect(UTok::RParen, "`)`")?;
                        }
                        other => return Err(self.err(format!("unknown worksharing field `{other}`"))),
                    }
                }
                self.expect(UTok::RParen, "`)`")?;
                LoopParKind::Worksharing { schedule, chunk, distribute }
            }
            "simd" => {
                self.expect(UTok::LParen, "`(`")?;
                self.expect(UTok::Word("simdlen".into()), "`simdlen`")?;
                let e = self.paren_expr()?;
                self.expect(UTok::RParen, "`)`")?;
                LoopParKind::Simd { simdlen: e }
            }
            "taskloop" => {
                self.expect(UTok::LParen, "`(`")?;
                let mut grainsize = None;
                let mut num_tasks = None;
                while let UTok::Word(f) = self.peek().clone() {
                    match f.as_str() {
                        "grainsize" => {
                            self.bump();
                            grainsize = Some(self.paren_expr()?);
                        }
                        "num_tasks" => {
                            self.bump();
                            num_tasks = Some(self.paren_expr()?);
                        }
                        other => return Err(self.err(format!("unknown taskloop field `{other}`"))),
                    }
                }
                self.expect(UTok::RParen, "`)`")?;
                LoopParKind::Taskloop { grainsize, num_tasks }
            }
            other => return Err(self.err(format!("unknown parallelization `{other}`"))),
        };
        Ok(LoopParallel { kind })
    }

    fn parse_task(&mut self) -> Result<NodeKind> {
        let mut t = TaskNode::default();
        loop {
            match self.peek().clone() {
                UTok::Word(w) => match w.as_str() {
                    "offload" | "remote" => {
                        self.bump();
                        t.kind = if w == "offload" { TaskKind::Offload } else { TaskKind::Remote };
                        self.expect(UTok::LParen, "`(`")?;
                        let d = self.expect_word("device")?;
                        let device = match d.as_str() {
                            "nvptx" => Device::Nvptx,
                            "amd" => Device::Amd,
                            "fpga" => Device::Fpga,
                            "host" => Device::Host,
                            other => return Err(self.err(format!("unknown device `{other}`"))),
                        };
                        self.expect(UTok::Colon, "`:`")?;
                        let id = self.parse_int()?;
                        self.expect(UTok::RParen, "`)`")?;
                        t.device = Some((device, id));
                    }
                    "async" => {
                        self.bump();
                        t.is_async = true;
                    }
                    "depend" => {
                        self.bump();
                        self.parse_depend(&mut t.depend)?;
                    }
                    "data" => {
                        self.bump();
                        t.data = self.paren_data_items()?;
                    }
                    "sync" => {
                        self.bump();
                        t.sync = self.paren_noderefs()?;
                    }
                    "policy" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        let p = self.expect_word("policy")?;
                        t.policy = Some(match p.as_str() {
                            "help-first" => TaskPolicy::HelpFirst,
                            "work-first" => TaskPolicy::WorkFirst,
                            other => return Err(self.err(format!("unknown policy `{other}`"))),
                        });
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    _ => return Err(self.err(format!("unknown task field `{w}`"))),
                },
                UTok::LBrace => break,
                other => return Err(self.err(format!("expected task field or `{{`, found {other:?}"))),
            }
        }
        self.expect(UTok::LBrace, "`{`")?;
        t.body = self.parse_region()?;
        Ok(NodeKind::Task(t))
    }

    fn parse_depend(&mut self, out: &mut Vec<(DependMode, VarRef)>) -> Result<()> {
        self.expect(UTok::LParen, "`(`")?;
        let m = self.expect_word("dependence mode")?;
        let mode = match m.as_str() {
            "in" => DependMode::In,
            "out" => DependMode::Out,
            "inout" => DependMode::InOut,
            other => return Err(self.err(format!("unknown dependence mode `{other}`"))),
        };
        self.expect(UTok::Colon, "`:`")?;
        loop {
            let name = self.expect_sym("symbol")?;
            let mut sections = Vec::new();
            while *self.peek() == UTok::LBracket {
                sections.push(self.parse_section()?);
            }
            out.push((mode, VarRef { name, sections }));
            if !self.eat(&UTok::Comma) {
                break;
            }
        }
        self.expect(UTok::RParen, "`)`")?;
        Ok(())
    }

    fn parse_data_region(&mut self) -> Result<NodeKind> {
        let data = self.paren_data_items()?;
        self.expect(UTok::LBrace, "`{`")?;
        let body = self.parse_region()?;
        Ok(NodeKind::DataRegion(DataRegionNode { data, body }))
    }

    fn parse_space(&mut self) -> Result<MemSpace> {
        let w = self.expect_word("memory space")?;
        if w == "host" {
            return Ok(MemSpace::Host);
        }
        let device = match w.as_str() {
            "nvptx" => Device::Nvptx,
            "amd" => Device::Amd,
            "fpga" => Device::Fpga,
            other => return Err(self.err(format!("unknown memory space `{other}`"))),
        };
        self.expect(UTok::Colon, "`:`")?;
        let id = self.parse_int()?;
        Ok(MemSpace::Device(device, id))
    }

    fn parse_data_movement(&mut self) -> Result<NodeKind> {
        self.expect(UTok::LParen, "`(`")?;
        let dest_space = self.parse_space()?;
        self.expect(UTok::Comma, "`,`")?;
        let dest = self.expect_sym("destination symbol")?;
        self.expect(UTok::Comma, "`,`")?;
        let src_space = self.parse_space()?;
        self.expect(UTok::Comma, "`,`")?;
        let src = self.expect_sym("source symbol")?;
        self.expect(UTok::Comma, "`,`")?;
        let size = self.parse_expr()?;
        self.expect(UTok::RParen, "`)`")?;
        let direction = self.parse_direction()?;
        let memcpy = self.parse_memcpy_field()?;
        let mut depend = Vec::new();
        while self.eat_word("depend") {
            self.parse_depend(&mut depend)?;
        }
        Ok(NodeKind::DataMovement(DataMovementNode { dest_space, dest, src_space, src, size, direction, memcpy, depend }))
    }

    fn parse_data_update(&mut self) -> Result<NodeKind> {
        self.expect(UTok::LParen, "`(`")?;
        let mut data = Vec::new();
        if *self.peek() != UTok::RParen {
            loop {
                data.push(self.expect_sym("symbol")?);
                if !self.eat(&UTok::Comma) {
                    break;
                }
            }
        }
        self.expect(UTok::RParen, "`)`")?;
        let direction = self.parse_direction()?;
        let memcpy = self.parse_memcpy_field()?;
        let mut depend = Vec::new();
        while self.eat_word("depend") {
            self.parse_depend(&mut depend)?;
        }
        Ok(NodeKind::DataUpdate(DataUpdateNode { data, direction, memcpy, depend }))
    }

    fn parse_direction(&mut self) -> Result<Direction> {
        let w = self.expect_word("direction")?;
        match w.as_str() {
            "forward" => Ok(Direction::Forward),
            "backward" => Ok(Direction::Backward),
            other => Err(self.err(format!("unknown direction `{other}`"))),
        }
    }

    fn parse_memcpy_field(&mut self) -> Result<MemcpyAttr> {
        self.expect(UTok::Word("memcpy".into()), "`memcpy`")?;
        self.expect(UTok::LParen, "`(`")?;
        let m = self.parse_memcpy_attr()?;
        self.expect(UTok::RParen, "`)`")?;
        Ok(m)
    }

    fn parse_memcpy_attr(&mut self) -> Result<MemcpyAttr> {
        match self.peek().clone() {
            UTok::Word(w) if w == "default_memcpy" => {
                self.bump();
                Ok(MemcpyAttr::Default)
            }
            UTok::Sym(s) => {
                self.bump();
                Ok(MemcpyAttr::Custom(s))
            }
            other => Err(self.err(format!("expected memcpy attribute, found {other:?}"))),
        }
    }

    fn parse_mm_alloc(&mut self) -> Result<NodeKind> {
        self.expect(UTok::LParen, "`(`")?;
        let allocator = match self.peek().clone() {
            UTok::Word(w) if w == "default_mem_alloc" => {
                self.bump();
                AllocatorAttr::Default
            }
            UTok::Word(w) if w == "large_cap_mem_alloc" => {
                self.bump();
                AllocatorAttr::LargeCap
            }
            UTok::Sym(s) => {
                self.bump();
                AllocatorAttr::Custom(s)
            }
            other => return Err(self.err(format!("expected allocator attribute, found {other:?}"))),
        };
        self.expect(UTok::RParen, "`)`")?;
        let symbol = self.expect_sym("symbol")?;
        self.expect(UTok::Word("size".into()), "`size`")?;
        let size = self.paren_expr()?;
        Ok(NodeKind::MmAlloc(MmAllocNode { allocator, symbol, size }))
    }

    fn parse_mm_dealloc(&mut self) -> Result<NodeKind> {
        self.expect(UTok::LParen, "`(`")?;
        let deallocator = match self.peek().clone() {
            UTok::Word(w) if w == "default_mem_dealloc" => {
                self.bump();
                DeallocatorAttr::Default
            }
            UTok::Word(w) if w == "large_cap_mem_dealloc" => {
                self.bump();
                DeallocatorAttr::LargeCap
            }
            UTok::Sym(s) => {
                self.bump();
                DeallocatorAttr::Custom(s)
            }
            other => return Err(self.err(format!("expected deallocator attribute, found {other:?}"))),
        };
        self.expect(UTok::RParen, "`)`")?;
        let symbol = self.expect_sym("symbol")?;
        Ok(NodeKind::MmDealloc(MmDeallocNode { deallocator, symbol }))
    }

    fn parse_sync(&mut self) -> Result<NodeKind> {
        let name_w = self.expect_word("sync name")?;
        let name = match name_w.as_str() {
            "barrier" => SyncName::Barrier,
            "reduction" => SyncName::Reduction,
            "taskwait" => SyncName::Taskwait,
            "broadcast" => SyncName::Broadcast,
            "allreduce" => SyncName::Allreduce,
            "send" => SyncName::Send,
            "recv" => SyncName::Recv,
            "single" => SyncName::Single,
            "critical" => SyncName::Critical,
            "atomic" => SyncName::Atomic,
            other => return Err(self.err(format!("unknown sync name `{other}`"))),
        };
        let mode_w = self.expect_word("`sync` or `async`")?;
        let mode = match mode_w.as_str() {
            "sync" => SyncMode::Sync,
            "async" => {
                let s = self.expect_word("async step")?;
                match s.as_str() {
                    "arrive-compute" => SyncMode::Async(SyncStep::ArriveCompute),
                    "wait-release" => SyncMode::Async(SyncStep::WaitRelease),
                    other => return Err(self.err(format!("unknown async step `{other}`"))),
                }
            }
            other => return Err(self.err(format!("expected `sync` or `async`, found `{other}`"))),
        };
        let mut primary = SyncUnit::all_threads();
        let mut secondary = SyncUnit::all_threads();
        let mut operation = None;
        let mut data = Vec::new();
        let mut implicit = false;
        loop {
            match self.peek().clone() {
                UTok::Word(w) => match w.as_str() {
                    "primary" => {
                        self.bump();
                        primary = self.paren_sync_unit()?;
                    }
                    "secondary" => {
                        self.bump();
                        secondary = self.paren_sync_unit()?;
                    }
                    "operation" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        operation = Some(match self.bump() {
                            UTok::Plus => ReductionOp::Add,
                            UTok::Minus => ReductionOp::Sub,
                            UTok::Star => ReductionOp::Mul,
                            UTok::Word(w) if w == "min" => ReductionOp::Min,
                            UTok::Word(w) if w == "max" => ReductionOp::Max,
                            other => return Err(self.err(format!("unknown operation {other:?}"))),
                        });
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "data" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        loop {
                            data.push(self.expect_sym("symbol")?);
                            if !self.eat(&UTok::Comma) {
                                break;
                            }
                        }
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    "implicit" => {
                        self.bump();
                        implicit = true;
                    }
                    // No closing token guards a sync op; the next operation
                    // or `}` ends the field list.
                    _ => break,
                },
                _ => break,
            }
        }
        let body = if self.eat(&UTok::LBrace) { Some(self.parse_region()?) } else { None };
        Ok(NodeKind::Sync(SyncNode { name, mode, primary, secondary, operation, data, implicit, body }))
    }

    fn paren_sync_unit(&mut self) -> Result<SyncUnit> {
        self.expect(UTok::LParen, "`(`")?;
        let k = self.expect_word("sync unit kind")?;
        let kind = match k.as_str() {
            "task" => SyncUnitKind::Task,
            "thread" => SyncUnitKind::Thread,
            "rank" => SyncUnitKind::Rank,
            other => return Err(self.err(format!("unknown sync unit kind `{other}`"))),
        };
        self.expect(UTok::Colon, "`:`")?;
        let unit = if self.eat(&UTok::Star) {
            SyncUnitId::All
        } else if let UTok::Int(v) = self.peek().clone() {
            self.bump();
            SyncUnitId::Id(Expr::IntLit(v))
        } else {
            SyncUnitId::Id(self.parse_expr()?)
        };
        self.expect(UTok::RParen, "`)`")?;
        Ok(SyncUnit { kind, unit })
    }

    fn parse_ext(&mut self) -> Result<NodeKind> {
        self.expect(UTok::LBrace, "`{`")?;
        let mut entries = BTreeMap::new();
        if *self.peek() != UTok::RBrace {
            loop {
                let key = self.expect_word("extension key")?;
                self.expect(UTok::Eq, "`=`")?;
                let value = match self.peek().clone() {
                    UTok::Str(s) => {
                        self.bump();
                        ExtValue::Str(s)
                    }
                    UTok::LBracket => {
                        self.bump();
                        let mut syms = Vec::new();
                        if *self.peek() != UTok::RBracket {
                            loop {
                                syms.push(self.expect_sym("symbol")?);
                                if !self.eat(&UTok::Comma) {
                                    break;
                                }
                            }
                        }
                        self.expect(UTok::RBracket, "`]`")?;
                        ExtValue::Symbols(syms)
                    }
                    _ => ExtValue::Expr(self.parse_expr()?),
                };
                entries.insert(key, value);
                if !self.eat(&UTok::Comma) {
                    break;
                }
            }
        }
        self.expect(UTok::RBrace, "`}`")?;
        Ok(NodeKind::Ext(ExtensionNode { entries }))
    }

    fn parse_if(&mut self) -> Result<NodeKind> {
        self.expect(UTok::Word("condition".into()), "`condition`")?;
        let cond = self.paren_expr()?;
        self.expect(UTok::LBrace, "`{`")?;
        let then_region = self.parse_region()?;
        let else_region = if self.eat_word("else") {
            self.expect(UTok::LBrace, "`{`")?;
            Some(self.parse_region()?)
        } else {
            None
        };
        Ok(NodeKind::If(IfNode { cond, then_region, else_region }))
    }

    fn parse_base_for(&mut self) -> Result<NodeKind> {
        let declares = self.eat_word("decl");
        let var = self.expect_sym("induction symbol")?;
        self.expect(UTok::Eq, "`=`")?;
        let init = self.parse_expr()?;
        self.expect(UTok::Word("cond".into()), "`cond`")?;
        let cond = self.paren_expr()?;
        self.expect(UTok::Word("step".into()), "`step`")?;
        let step = self.paren_expr()?;
        self.expect(UTok::LBrace, "`{`")?;
        let body = self.parse_region()?;
        Ok(NodeKind::BaseFor(BaseForNode { var, declares, init, cond, step, body }))
    }

    fn parse_decl(&mut self) -> Result<NodeKind> {
        let ty = self.parse_scalar_type()?;
        let name = self.expect_sym("symbol")?;
        let init = if self.eat(&UTok::Eq) { Some(self.parse_expr()?) } else { None };
        Ok(NodeKind::Decl { ty, name, init })
    }

    fn parse_assign(&mut self) -> Result<NodeKind> {
        let base = self.expect_sym("symbol")?;
        let mut indices = Vec::new();
        while self.eat(&UTok::LBracket) {
            indices.push(self.parse_expr()?);
            self.expect(UTok::RBracket, "`]`")?;
        }
        self.expect(UTok::Eq, "`=`")?;
        let value = self.parse_expr()?;
        Ok(NodeKind::Assign { base, indices, value })
    }

    fn parse_call(&mut self) -> Result<NodeKind> {
        let callee = match self.bump() {
            UTok::FuncRef(n) => n,
            other => return Err(self.err(format!("expected `@name`, found {other:?}"))),
        };
        self.expect(UTok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !self.eat(&UTok::RParen) {
            loop {
                args.push(self.parse_expr()?);
                if self.eat(&UTok::RParen) {
                    break;
                }
                self.expect(UTok::Comma, "`,`")?;
            }
        }
        Ok(NodeKind::Call { callee, args })
    }

    // ---- shared pieces ----------------------------------------------------

    fn parse_int(&mut self) -> Result<i64> {
        match self.bump() {
            UTok::Int(v) => Ok(v),
            UTok::Minus => match self.bump() {
                UTok::Int(v) => Ok(-v),
                other => Err(self.err(format!("expected integer, found {other:?}"))),
            },
            other => Err(self.err(format!("expected integer, found {other:?}"))),
        }
    }

    fn paren_expr(&mut self) -> Result<Expr> {
        self.expect(UTok::LParen, "`(`")?;
        let e = self.parse_expr()?;
        self.expect(UTok::RParen, "`)`")?;
        Ok(e)
    }

    fn paren_noderefs(&mut self) -> Result<Vec<NodeId>> {
        self.expect(UTok::LParen, "`(`")?;
        let mut out = Vec::new();
        loop {
            out.push(self.expect_noderef("node reference")?);
            if !self.eat(&UTok::Comma) {
                break;
            }
        }
        self.expect(UTok::RParen, "`)`")?;
        Ok(out)
    }

    fn starts_expr(&self) -> bool {
        matches!(
            self.peek(),
            UTok::Sym(_) | UTok::Const(_) | UTok::FConst(_) | UTok::LParen | UTok::Minus
        ) || matches!(self.peek(), UTok::Word(w) if w.starts_with("__"))
    }

    fn parse_expr(&mut self) -> Result<Expr> {
        let lhs = self.parse_additive()?;
        let op = match self.peek() {
            UTok::Lt => BinOp::Lt,
            UTok::Le => BinOp::Le,
            UTok::Gt => BinOp::Gt,
            UTok::Ge => BinOp::Ge,
            UTok::EqEq => BinOp::Eq,
            UTok::Ne => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.parse_additive()?;
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn parse_additive(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = match self.peek() {
                UTok::Plus => BinOp::Add,
                UTok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_multiplicative()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn parse_multiplicative(&mut self) -> Result<Expr> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                UTok::Star => BinOp::Mul,
                UTok::Slash => BinOp::Div,
                UTok::Percent => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if self.eat(&UTok::Minus) {
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            UTok::Const(v) => {
                self.bump();
                Ok(Expr::IntLit(v))
            }
            UTok::FConst(v) => {
                self.bump();
                Ok(Expr::FloatLit(v))
            }
            UTok::Sym(name) => {
                self.bump();
                let mut indices = Vec::new();
                while *self.peek() == UTok::LBracket && indices.len() < 2 {
                    self.bump();
                    indices.push(self.parse_expr()?);
                    self.expect(UTok::RBracket, "`]`")?;
                }
                if indices.is_empty() {
                    Ok(Expr::Ident(name))
                } else {
                    Ok(Expr::Index { base: name, indices })
                }
            }
            UTok::LParen => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(UTok::RParen, "`)`")?;
                Ok(e)
            }
            UTok::Word(w) if w.starts_with("__") => {
                self.bump();
                self.expect(UTok::LParen, "`(`")?;
                self.expect(UTok::RParen, "`)`")?;
                match w.as_str() {
                    "__unit_id" => Ok(Expr::Intrinsic(Intrinsic::UnitId)),
                    "__team_id" => Ok(Expr::Intrinsic(Intrinsic::TeamId)),
                    "__units_per_team" => Ok(Expr::Intrinsic(Intrinsic::UnitsPerTeam)),
                    other => Err(self.err(format!("unknown intrinsic `{other}`"))),
                }
            }
            other => Err(self.err(format!("expected expression, found {other:?}"))),
        }
    }

    fn parse_section(&mut self) -> Result<ArraySection> {
        self.expect(UTok::LBracket, "`[`")?;
        let lower = self.parse_expr()?;
        let mut length = None;
        let mut stride = None;
        if self.eat(&UTok::Colon) {
            if self.eat(&UTok::Star) {
                length = None;
            } else {
                length = Some(self.parse_expr()?);
            }
            if self.eat(&UTok::Colon) {
                stride = Some(self.parse_expr()?);
            }
        }
        self.expect(UTok::RBracket, "`]`")?;
        Ok(ArraySection { lower, length, stride: stride.or(Some(Expr::IntLit(1))) })
    }

    fn paren_data_items(&mut self) -> Result<Vec<DataItem>> {
        self.expect(UTok::LParen, "`(`")?;
        let mut items = Vec::new();
        if *self.peek() != UTok::RParen {
            loop {
                items.push(self.parse_data_item()?);
                if !self.eat(&UTok::Comma) {
                    break;
                }
            }
        }
        self.expect(UTok::RParen, "`)`")?;
        Ok(items)
    }

    fn parse_data_item(&mut self) -> Result<DataItem> {
        let symbol = self.expect_sym("data item symbol")?;
        let mut item = DataItem::unknown(symbol);
        self.expect(UTok::LParen, "`(`")?;
        // sharing
        let w = self.expect_word("sharing property")?;
        if w != "unknown" {
            let property = match w.as_str() {
                "shared" => SharingProp::Shared,
                "private" => SharingProp::Private,
                "firstprivate" => SharingProp::Firstprivate,
                "lastprivate" => SharingProp::Lastprivate,
                other => return Err(self.err(format!("unknown sharing property `{other}`"))),
            };
            let visibility = if self.eat(&UTok::LParen) {
                let v = self.parse_visibility()?;
                self.expect(UTok::RParen, "`)`")?;
                v
            } else {
                Visibility::Explicit
            };
            item.sharing = FieldState::Known(Sharing { property, visibility });
        }
        self.expect(UTok::Comma, "`,`")?;
        // mapping
        let w = self.expect_word("mapping property")?;
        if w != "unknown" {
            let property = match w.as_str() {
                "to" => MappingProp::To,
                "from" => MappingProp::From,
                "tofrom" => MappingProp::ToFrom,
                "allocate" => MappingProp::Allocate,
                "none" => MappingProp::None,
                other => return Err(self.err(format!("unknown mapping property `{other}`"))),
            };
            let mut visibility = Visibility::Explicit;
            let mut mapper = None;
            if self.eat(&UTok::LParen) {
                loop {
                    match self.peek().clone() {
                        UTok::Word(v) if v == "implicit" || v == "explicit" => {
                            visibility = self.parse_visibility()?;
                        }
                        UTok::Sym(s) => {
                            self.bump();
                            mapper = Some(s);
                        }
                        other => return Err(self.err(format!("unknown mapping modifier {other:?}"))),
                    }
                    if !self.eat(&UTok::Comma) {
                        break;
                    }
                }
                self.expect(UTok::RParen, "`)`")?;
            }
            item.mapping = FieldState::Known(Mapping { property, visibility, mapper });
        }
        self.expect(UTok::Comma, "`,`")?;
        // access
        let w = self.expect_word("access mode")?;
        if w != "unknown" {
            item.access = FieldState::Known(match w.as_str() {
                "read-only" => Access::ReadOnly,
                "write-only" => Access::WriteOnly,
                "read-write" => Access::ReadWrite,
                other => return Err(self.err(format!("unknown access mode `{other}`"))),
            });
        }
        self.expect(UTok::Comma, "`,`")?;
        // distribution
        if matches!(self.peek(), UTok::Word(w) if w == "unknown") {
            self.bump();
        } else {
            let mut dist =
                Distribution { unit_id: None, pattern: DistributionPattern::Block, section: Vec::new() };
            loop {
                match self.peek().clone() {
                    UTok::Word(w) if w == "unit-id" => {
                        self.bump();
                        dist.unit_id = Some(self.paren_expr()?);
                    }
                    UTok::Word(w) if w == "pattern" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        let p = self.expect_word("pattern")?;
                        dist.pattern = match p.as_str() {
                            "block" => DistributionPattern::Block,
                            "cyclic" => DistributionPattern::Cyclic,
                            "linear" => DistributionPattern::Linear,
                            "loop" => DistributionPattern::Loop,
                            other => return Err(self.err(format!("unknown pattern `{other}`"))),
                        };
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    UTok::Word(w) if w == "section" => {
                        self.bump();
                        self.expect(UTok::LParen, "`(`")?;
                        while *self.peek() == UTok::LBracket {
                            dist.section.push(self.parse_section()?);
                        }
                        self.expect(UTok::RParen, "`)`")?;
                    }
                    _ => return Err(self.err("expected distribution item".into())),
                }
                // Distribution items are comma separated, but so are the outer
                // fields; only continue on a known distribution keyword.
                if *self.peek() == UTok::Comma
                    && matches!(self.peek2(), UTok::Word(w) if w == "unit-id" || w == "pattern" || w == "section")
                {
                    self.bump();
                    continue;
                }
                break;
            }
            item.distribution = FieldState::Known(dist);
        }
        self.expect(UTok::Comma, "`,`")?;
        // allocator
        match self.peek().clone() {
            UTok::Word(w) if w == "unknown" => {
                self.bump();
            }
            _ => {
                self.expect(UTok::Word("allocator".into()), "`allocator`")?;
                self.expect(UTok::LParen, "`(`")?;
                let a = match self.bump() {
                    UTok::Word(w) if w == "default_mem_alloc" => AllocatorAttr::Default,
                    UTok::Word(w) if w == "large_cap_mem_alloc" => AllocatorAttr::LargeCap,
                    UTok::Sym(s) => AllocatorAttr::Custom(s),
                    other => return Err(self.err(format!("unknown allocator {other:?}"))),
                };
                self.expect(UTok::RParen, "`)`")?;
                item.allocator = FieldState::Known(a);
            }
        }
        self.expect(UTok::Comma, "`,`")?;
        // deallocator
        match self.peek().clone() {
            UTok::Word(w) if w == "unknown" => {
                self.bump();
            }
            _ => {
                self.expect(UTok::Word("deallocator".into()), "`deallocator`")?;
                self.expect(UTok::LParen, "`(`")?;
                let d = match self.bump() {
                    UTok::Word(w) if w == "default_mem_dealloc" => DeallocatorAttr::Default,
                    UTok::Word(w) if w == "large_cap_mem_dealloc" => DeallocatorAttr::LargeCap,
                    UTok::Sym(s) => DeallocatorAttr::Custom(s),
                    other => return Err(self.err(format!("unknown deallocator {other:?}"))),
                };
                self.expect(UTok::RParen, "`)`")?;
                item.deallocator = FieldState::Known(d);
            }
        }
        self.expect(UTok::Comma, "`,`")?;
        // memcpy
        match self.peek().clone() {
            UTok::Word(w) if w == "unknown" => {
                self.bump();
            }
            _ => {
                item.memcpy = FieldState::Known(self.parse_memcpy_field()?);
            }
        }
        self.expect(UTok::RParen, "`)`")?;
        Ok(item)
    }

    fn parse_visibility(&mut self) -> Result<Visibility> {
        let w = self.expect_word("visibility")?;
        match w.as_str() {
            "implicit" => Ok(Visibility::Implicit),
            "explicit" => Ok(Visibility::Explicit),
            other => Err(self.err(format!("unknown visibility `{other}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Symbol resolution
// ---------------------------------------------------------------------------

/// Flow-insensitive check that every `%symbol` is introduced somewhere in its
/// function: parameter, declaration, loop induction variable, or allocation.
fn check_symbols(module: &Module) -> Result<()> {
    for f in &module.functions {
        let mut declared: std::collections::HashSet<String> =
            f.params.iter().map(|p| p.name.clone()).collect();
        collect_decls(&f.body, &mut declared);
        let mut used = Vec::new();
        collect_uses(&f.body, &mut used);
        for sym in used {
            if !declared.contains(&sym) {
                return Err(Diag::new(
                    Pos::default(),
                    format!("unresolved symbol `%{sym}` in function @{}", f.name),
                ));
            }
        }
    }
    Ok(())
}

fn collect_decls(region: &Region, out: &mut std::collections::HashSet<String>) {
    for n in &region.nodes {
        match &n.kind {
            NodeKind::Decl { name, .. } => {
                out.insert(name.clone());
            }
            NodeKind::Loop(l) => {
                out.insert(l.induction.clone());
            }
            NodeKind::BaseFor(f) => {
                out.insert(f.var.clone());
            }
            NodeKind::MmAlloc(a) => {
                out.insert(a.symbol.clone());
            }
            _ => {}
        }
        for r in n.regions() {
            collect_decls(r, out);
        }
    }
}

fn expr_syms(e: &Expr, out: &mut Vec<String>) {
    e.referenced_symbols(out);
}

fn collect_uses(region: &Region, out: &mut Vec<String>) {
    for n in &region.nodes {
        match &n.kind {
            NodeKind::Spmd(s) => {
                for e in [&s.num_teams, &s.num_units].into_iter().flatten() {
                    expr_syms(e, out);
                }
                for item in &s.data {
                    out.push(item.symbol.clone());
                }
            }
            NodeKind::Loop(l) => {
                for e in [&l.lower, &l.upper, &l.step] {
                    expr_syms(e, out);
                }
                for item in &l.data {
                    out.push(item.symbol.clone());
                }
            }
            NodeKind::Task(t) => {
                for (_, v) in &t.depend {
                    out.push(v.name.clone());
                }
                for item in &t.data {
                    out.push(item.symbol.clone());
                }
            }
            NodeKind::DataRegion(d) => {
                for item in &d.data {
                    out.push(item.symbol.clone());
                }
            }
            NodeKind::DataMovement(m) => {
                out.push(m.dest.clone());
                out.push(m.src.clone());
                expr_syms(&m.size, out);
            }
            NodeKind::DataUpdate(u) => out.extend(u.data.iter().cloned()),
            NodeKind::MmAlloc(a) => expr_syms(&a.size, out),
            NodeKind::MmDealloc(d) => out.push(d.symbol.clone()),
            // Critical-section names are labels, not variables.
            NodeKind::Sync(s) if s.name != SyncName::Critical => out.extend(s.data.iter().cloned()),
            NodeKind::Sync(_) => {}
            NodeKind::Ext(_) => {}
            NodeKind::If(i) => expr_syms(&i.cond, out),
            NodeKind::BaseFor(f) => {
                for e in [&f.init, &f.cond, &f.step] {
                    expr_syms(e, out);
                }
            }
            NodeKind::Decl { init, .. } => {
                if let Some(e) = init {
                    expr_syms(e, out);
                }
            }
            NodeKind::Assign { base, indices, value } => {
                out.push(base.clone());
                for e in indices {
                    expr_syms(e, out);
                }
                expr_syms(value, out);
            }
            NodeKind::Call { args, .. } => {
                for e in args {
                    expr_syms(e, out);
                }
            }
            NodeKind::Return(v) => {
                if let Some(e) = v {
                    expr_syms(e, out);
                }
            }
        }
        for r in n.regions() {
            collect_uses(r, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::print_upir;

    #[test]
    fn fields_out_of_order_are_accepted_and_recanonicalized() {
        let scrambled = "\
module {
  func @f(%n : int) {
    upir.spmd num_units(%c4) target(cpu) {
      upir.loop step(%c1) induction(%i) upperBound(%n) collapse(1) lowerBound(%c0) {
        upir.loop_parallel worksharing(distribute(units) schedule(static)) {
          upir.assign %n = %i
        }
      }
    }
  }
}
";
        let m = parse_upir(scrambled).unwrap();
        let printed = print_upir(&m).unwrap();
        // canonical order restored
        assert!(printed.contains("upir.spmd target(cpu) num_units(%c4)"), "{printed}");
        assert!(
            printed.contains("upir.loop induction(%i) lowerBound(%c0) upperBound(%n) step(%c1)"),
            "{printed}"
        );
        assert!(printed.contains("worksharing(schedule(static) distribute(units))"), "{printed}");
        let again = parse_upir(&printed).unwrap();
        assert_eq!(print_upir(&again).unwrap(), printed);
    }

    #[test]
    fn dangling_reference_rejected() {
        let text = "\
module {
  func @f(%n : int) {
    upir.spmd target(cpu) sync(%n99) {
      upir.assign %n = %c1
    }
  }
}
";
        let err = parse_upir(text).unwrap_err();
        assert!(err.msg.contains("dangling"), "{err}");
    }

    #[test]
    fn unresolved_symbol_rejected() {
        let text = "\
module {
  func @f(%n : int) {
    upir.assign %nope = %c1
  }
}
";
        let err = parse_upir(text).unwrap_err();
        assert!(err.msg.contains("unresolved symbol"), "{err}");
    }

    #[test]
    fn async_pair_round_trips_with_steps() {
        let text = "\
module {
  func @f(%s : int) {
    upir.spmd target(cpu) num_units(%c2) {
      upir.sync reduction async arrive-compute primary(thread:0) secondary(thread:*) operation(+) data(%s)
      upir.assign %s = %s + %c1
      upir.sync reduction async wait-release primary(thread:0) secondary(thread:*) operation(+) data(%s)
    }
  }
}
";
        let m = parse_upir(text).unwrap();
        let mut steps = Vec::new();
        m.walk(&mut |n| {
            if let NodeKind::Sync(s) = &n.kind {
                steps.push(s.mode);
            }
        });
        assert_eq!(
            steps,
            vec![SyncMode::Async(SyncStep::ArriveCompute), SyncMode::Async(SyncStep::WaitRelease)]
        );
        let printed = print_upir(&m).unwrap();
        assert_eq!(parse_upir(&printed).unwrap(), m);
    }

    #[test]
    fn unmatched_async_pair_rejected() {
        let text = "\
module {
  func @f(%s : int) {
    upir.spmd target(cpu) {
      upir.sync barrier async arrive-compute primary(thread:*) secondary(thread:*)
    }
  }
}
";
        let err = parse_upir(text).unwrap_err();
        assert!(err.msg.contains("no matching wait-release"), "{err}");
    }
}
