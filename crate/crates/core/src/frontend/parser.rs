//! Recursive descent parser for the kernel language, plus the semantic checks
//! that gate directive attachment (declared identifiers, canonical loops,
//! launch typing).

use crate::ast::*;
use crate::diag::{Diag, Pos, Result};
use crate::frontend::directive;
use crate::frontend::lexer::{Lexer, Tok, Token};
use std::collections::HashMap;

/// Cursor over a token stream. Also used by the directive parser for clause
/// argument expressions.
pub(crate) struct Cursor {
    toks: Vec<Token>,
    i: usize,
}

impl Cursor {
    pub(crate) fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, i: 0 }
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    pub(crate) fn peek2(&self) -> &Tok {
        &self.toks[(self.i + 1).min(self.toks.len() - 1)].tok
    }

    pub(crate) fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    pub(crate) fn off(&self) -> usize {
        self.toks[self.i].off
    }

    pub(crate) fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, t: &Tok, what: &str) -> Result<Token> {
        if self.peek() == t {
            Ok(self.bump())
        } else {
            Err(Diag::new(self.pos(), format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    pub(crate) fn expect_ident(&mut self, what: &str) -> Result<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, pos))
            }
            other => Err(Diag::new(pos, format!("expected {what}, found {}", describe(&other)))),
        }
    }

    pub(crate) fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(name) if name == kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        *self.peek() == Tok::Eof
    }

    // ---- expressions -----------------------------------------------------

    pub(crate) fn parse_expr(&mut self) -> Result<Expr> {
        let lhs = self.parse_additive()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
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
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
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
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::IntLit(v))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::FloatLit(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.parse_expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                // CUDA thread-position builtins become portable intrinsics.
                if let Some(intr) = cuda_builtin(&name) {
                    self.expect(&Tok::Dot, "`.` after CUDA builtin")?;
                    let (field, fpos) = self.expect_ident("`x`")?;
                    if field != "x" {
                        return Err(Diag::new(fpos, format!("unsupported CUDA builtin field `.{field}`")));
                    }
                    return Ok(Expr::Intrinsic(intr));
                }
                if let Some(intr) = intrinsic_name(&name) {
                    self.expect(&Tok::LParen, "`(`")?;
                    self.expect(&Tok::RParen, "`)`")?;
                    return Ok(Expr::Intrinsic(intr));
                }
                let mut indices = Vec::new();
                while *self.peek() == Tok::LBracket && indices.len() < 2 {
                    self.bump();
                    indices.push(self.parse_expr()?);
                    self.expect(&Tok::RBracket, "`]`")?;
                }
                if indices.is_empty() {
                    Ok(Expr::Ident(name))
                } else {
                    Ok(Expr::Index { base: name, indices })
                }
            }
            other => Err(Diag::new(pos, format!("expected expression, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(n) => format!("`{n}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Float(v) => format!("`{v}`"),
        Tok::Pragma(_) => "pragma".into(),
        Tok::Eof => "end of input".into(),
        other => format!("`{}`", token_text(other)),
    }
}

fn token_text(t: &Tok) -> &'static str {
    match t {
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBrace => "{",
        Tok::RBrace => "}",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Semi => ";",
        Tok::Comma => ",",
        Tok::Colon => ":",
        Tok::Dot => ".",
        Tok::Assign => "=",
        Tok::PlusAssign => "+=",
        Tok::MinusAssign => "-=",
        Tok::StarAssign => "*=",
        Tok::PlusPlus => "++",
        Tok::MinusMinus => "--",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Percent => "%",
        Tok::Lt => "<",
        Tok::Le => "<=",
        Tok::Gt => ">",
        Tok::Ge => ">=",
        Tok::EqEq => "==",
        Tok::Ne => "!=",
        Tok::LaunchOpen => "<<<",
        Tok::LaunchClose => ">>>",
        _ => "?",
    }
}

fn cuda_builtin(name: &str) -> Option<Intrinsic> {
    match name {
        "threadIdx" => Some(Intrinsic::UnitId),
        "blockIdx" => Some(Intrinsic::TeamId),
        "blockDim" => Some(Intrinsic::UnitsPerTeam),
        _ => None,
    }
}

fn intrinsic_name(name: &str) -> Option<Intrinsic> {
    match name {
        "__unit_id" => Some(Intrinsic::UnitId),
        "__team_id" => Some(Intrinsic::TeamId),
        "__units_per_team" => Some(Intrinsic::UnitsPerTeam),
        _ => None,
    }
}

fn scalar_type(name: &str) -> Option<ScalarType> {
    match name {
        "int" => Some(ScalarType::Int),
        "float" => Some(ScalarType::Float),
        "double" => Some(ScalarType::Double),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Program parsing
// ---------------------------------------------------------------------------

/// Parse a `.ukl` source file into a checked `Program` with directives
/// attached to their statements.
pub fn parse_kernel_source(text: &str) -> Result<Program> {
    let toks = Lexer::tokenize(text)?;
    let mut cur = Cursor::new(toks);
    let mut program = Program::default();
    while !cur.at_eof() {
        program.functions.push(parse_function(&mut cur)?);
    }
    check_program(&mut program)?;
    Ok(program)
}

fn parse_function(cur: &mut Cursor) -> Result<Function> {
    let pos = cur.pos();
    let is_kernel = cur.eat_keyword("__global__");
    let (ret_name, rpos) = cur.expect_ident("return type")?;
    let ret = if ret_name == "void" {
        None
    } else {
        Some(scalar_type(&ret_name).ok_or_else(|| Diag::new(rpos, format!("unknown type `{ret_name}`")))?)
    };
    let (name, _) = cur.expect_ident("function name")?;
    cur.expect(&Tok::LParen, "`(`")?;
    let mut params = Vec::new();
    if !cur.eat(&Tok::RParen) {
        loop {
            let (tname, tpos) = cur.expect_ident("parameter type")?;
            let elem =
                scalar_type(&tname).ok_or_else(|| Diag::new(tpos, format!("unknown type `{tname}`")))?;
            let (pname, _) = cur.expect_ident("parameter name")?;
            let mut rank = 0u8;
            while cur.eat(&Tok::LBracket) {
                cur.expect(&Tok::RBracket, "`]`")?;
                rank += 1;
                if rank > 2 {
                    return Err(Diag::new(tpos, "arrays are limited to two dimensions"));
                }
            }
            params.push(Param { name: pname, ty: Type { elem, rank } });
            if cur.eat(&Tok::RParen) {
                break;
            }
            cur.expect(&Tok::Comma, "`,` or `)`")?;
        }
    }
    cur.expect(&Tok::LBrace, "function body `{`")?;
    let mut body = Vec::new();
    while !cur.eat(&Tok::RBrace) {
        if cur.at_eof() {
            return Err(Diag::new(cur.pos(), "unexpected end of input in function body"));
        }
        body.push(parse_stmt(cur)?);
    }
    Ok(Function { name, params, ret, is_kernel, body, pos })
}

fn parse_stmt(cur: &mut Cursor) -> Result<Stmt> {
    let pos = cur.pos();
    if let Tok::Pragma(payload) = cur.peek().clone() {
        cur.bump();
        let d = directive::parse_pragma(&payload, pos)?;
        if d.is_standalone() {
            return Ok(Stmt { kind: StmtKind::Empty, directives: vec![d], pos });
        }
        let mut stmt = parse_stmt(cur)?;
        check_attach(&d, &stmt)?;
        stmt.directives.insert(0, d);
        return Ok(stmt);
    }
    match cur.peek().clone() {
        Tok::LBrace => {
            cur.bump();
            let mut stmts = Vec::new();
            while !cur.eat(&Tok::RBrace) {
                if cur.at_eof() {
                    return Err(Diag::new(cur.pos(), "unexpected end of input in block"));
                }
                stmts.push(parse_stmt(cur)?);
            }
            Ok(Stmt { kind: StmtKind::Block(stmts), directives: Vec::new(), pos })
        }
        Tok::Ident(name) if name == "for" => parse_for(cur, pos),
        Tok::Ident(name) if name == "if" => {
            cur.bump();
            cur.expect(&Tok::LParen, "`(`")?;
            let cond = cur.parse_expr()?;
            cur.expect(&Tok::RParen, "`)`")?;
            let then_branch = Box::new(parse_stmt(cur)?);
            let else_branch = if cur.eat_keyword("else") { Some(Box::new(parse_stmt(cur)?)) } else { None };
            Ok(Stmt { kind: StmtKind::If { cond, then_branch, else_branch }, directives: Vec::new(), pos })
        }
        Tok::Ident(name) if name == "return" => {
            cur.bump();
            let value = if *cur.peek() == Tok::Semi { None } else { Some(cur.parse_expr()?) };
            cur.expect(&Tok::Semi, "`;`")?;
            Ok(Stmt { kind: StmtKind::Return(value), directives: Vec::new(), pos })
        }
        Tok::Ident(name) if scalar_type(&name).is_some() => {
            cur.bump();
            let ty = scalar_type(&name).unwrap();
            let (vname, _) = cur.expect_ident("variable name")?;
            let init = if cur.eat(&Tok::Assign) { Some(cur.parse_expr()?) } else { None };
            cur.expect(&Tok::Semi, "`;`")?;
            Ok(Stmt { kind: StmtKind::Decl { ty, name: vname, init }, directives: Vec::new(), pos })
        }
        Tok::Ident(_) => parse_assign_or_call(cur, pos),
        other => Err(Diag::new(pos, format!("expected statement, found {}", describe(&other)))),
    }
}

fn parse_assign_or_call(cur: &mut Cursor, pos: Pos) -> Result<Stmt> {
    let (name, _) = cur.expect_ident("identifier")?;
    // Call forms: `f(...)` or `f<<<g, b>>>(...)`.
    if *cur.peek() == Tok::LParen || *cur.peek() == Tok::LaunchOpen {
        let launch = if cur.eat(&Tok::LaunchOpen) {
            let grid = cur.parse_expr()?;
            cur.expect(&Tok::Comma, "`,`")?;
            let block = cur.parse_expr()?;
            cur.expect(&Tok::LaunchClose, "`>>>`")?;
            Some((grid, block))
        } else {
            None
        };
        cur.expect(&Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if !cur.eat(&Tok::RParen) {
            loop {
                args.push(cur.parse_expr()?);
                if cur.eat(&Tok::RParen) {
                    break;
                }
                cur.expect(&Tok::Comma, "`,` or `)`")?;
            }
        }
        cur.expect(&Tok::Semi, "`;`")?;
        return Ok(Stmt { kind: StmtKind::Call { callee: name, args, launch }, directives: Vec::new(), pos });
    }
    let mut indices = Vec::new();
    while cur.eat(&Tok::LBracket) {
        indices.push(cur.parse_expr()?);
        cur.expect(&Tok::RBracket, "`]`")?;
        if indices.len() > 2 {
            return Err(Diag::new(pos, "arrays are limited to two dimensions"));
        }
    }
    let lhs = LValue { base: name.clone(), indices };
    let rhs = match cur.peek().clone() {
        Tok::Assign => {
            cur.bump();
            cur.parse_expr()?
        }
        // Compound assignments desugar immediately.
        Tok::PlusAssign => {
            cur.bump();
            Expr::bin(BinOp::Add, lvalue_expr(&lhs), cur.parse_expr()?)
        }
        Tok::MinusAssign => {
            cur.bump();
            Expr::bin(BinOp::Sub, lvalue_expr(&lhs), cur.parse_expr()?)
        }
        Tok::StarAssign => {
            cur.bump();
            Expr::bin(BinOp::Mul, lvalue_expr(&lhs), cur.parse_expr()?)
        }
        other => {
            return Err(Diag::new(cur.pos(), format!("expected assignment operator, found {}", describe(&other))))
        }
    };
    cur.expect(&Tok::Semi, "`;`")?;
    Ok(Stmt { kind: StmtKind::Assign { lhs, rhs }, directives: Vec::new(), pos })
}

fn lvalue_expr(lv: &LValue) -> Expr {
    if lv.indices.is_empty() {
        Expr::Ident(lv.base.clone())
    } else {
        Expr::Index { base: lv.base.clone(), indices: lv.indices.clone() }
    }
}

fn parse_for(cur: &mut Cursor, pos: Pos) -> Result<Stmt> {
    cur.bump(); // `for`
    cur.expect(&Tok::LParen, "`(`")?;
    let declares = matches!(cur.peek(), Tok::Ident(n) if scalar_type(n).is_some());
    if declares {
        let (tname, tpos) = cur.expect_ident("type")?;
        if scalar_type(&tname) != Some(ScalarType::Int) {
            return Err(Diag::new(tpos, "loop induction variable must be `int`"));
        }
    }
    let (var, _) = cur.expect_ident("induction variable")?;
    cur.expect(&Tok::Assign, "`=`")?;
    let init = cur.parse_expr()?;
    cur.expect(&Tok::Semi, "`;`")?;
    let cond = cur.parse_expr()?;
    cur.expect(&Tok::Semi, "`;`")?;
    let (ivar, ipos) = cur.expect_ident("increment variable")?;
    if ivar != var {
        return Err(Diag::new(ipos, format!("for-loop increments `{ivar}` but iterates `{var}`")));
    }
    let step = match cur.peek().clone() {
        Tok::PlusPlus => {
            cur.bump();
            Expr::IntLit(1)
        }
        Tok::MinusMinus => {
            cur.bump();
            Expr::IntLit(-1)
        }
        Tok::PlusAssign => {
            cur.bump();
            cur.parse_expr()?
        }
        Tok::MinusAssign => {
            cur.bump();
            Expr::Neg(Box::new(cur.parse_expr()?)).fold()
        }
        Tok::Assign => {
            // `i = i + c` / `i = i - c`
            cur.bump();
            let (v2, vpos) = cur.expect_ident("increment variable")?;
            if v2 != var {
                return Err(Diag::new(vpos, "for-loop increment must update the induction variable"));
            }
            match cur.bump().tok {
                Tok::Plus => cur.parse_expr()?,
                Tok::Minus => Expr::Neg(Box::new(cur.parse_expr()?)).fold(),
                other => {
                    return Err(Diag::new(ipos, format!("unsupported increment operator {}", describe(&other))))
                }
            }
        }
        other => return Err(Diag::new(ipos, format!("unsupported increment form {}", describe(&other)))),
    };
    cur.expect(&Tok::RParen, "`)`")?;
    let body = parse_stmt(cur)?;
    Ok(Stmt {
        kind: StmtKind::For(Box::new(ForStmt { var, declares, init, cond, step, body })),
        directives: Vec::new(),
        pos,
    })
}

/// Directive/statement attach-point legality. Loop directives additionally
/// require a canonical loop shape.
fn check_attach(d: &Directive, stmt: &Stmt) -> Result<()> {
    if d.needs_loop() {
        match &stmt.kind {
            StmtKind::For(f) => {
                if !f.is_canonical() {
                    return Err(Diag::new(
                        stmt.pos,
                        "non-canonical loop under a loop directive (need `var <cmp> bound` with loop-invariant bound)",
                    ));
                }
            }
            // A stacked loop directive below this one will claim the loop.
            StmtKind::Empty => {}
            _ => {
                return Err(Diag::new(stmt.pos, format!("directive at {} requires a for-loop", d.pos)));
            }
        }
        if !matches!(stmt.kind, StmtKind::For(_)) && stmt.directives.iter().all(|i| !i.needs_loop()) {
            return Err(Diag::new(stmt.pos, format!("directive at {} requires a for-loop", d.pos)));
        }
    }
    if d.has_construct(Construct::Atomic) && !matches!(stmt.kind, StmtKind::Assign { .. }) {
        return Err(Diag::new(stmt.pos, "`atomic` must be attached to an assignment"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Semantic checking
// ---------------------------------------------------------------------------

struct Checker<'a> {
    program: &'a Program,
    scopes: Vec<HashMap<String, Type>>,
}

impl<'a> Checker<'a> {
    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Type, pos: Pos) -> Result<()> {
        if self.lookup(name).is_some() {
            return Err(Diag::new(pos, format!("`{name}` is already declared")));
        }
        // `c<digits>`, `f<digits>`, `n<digits>` collide with IR constant and
        // node-reference spellings.
        let mut chars = name.chars();
        if matches!(chars.next(), Some('c' | 'f' | 'n'))
            && name.len() > 1
            && chars.all(|c| c.is_ascii_digit())
        {
            return Err(Diag::new(pos, format!("`{name}` is a reserved identifier")));
        }
        self.scopes.last_mut().unwrap().insert(name.to_string(), ty);
        Ok(())
    }

    fn type_of(&self, e: &Expr, pos: Pos) -> Result<Type> {
        match e {
            Expr::IntLit(_) => Ok(Type::scalar(ScalarType::Int)),
            Expr::FloatLit(_) => Ok(Type::scalar(ScalarType::Double)),
            Expr::Intrinsic(_) => Ok(Type::scalar(ScalarType::Int)),
            Expr::Ident(n) => {
                self.lookup(n).ok_or_else(|| Diag::new(pos, format!("use of undeclared identifier `{n}`")))
            }
            Expr::Index { base, indices } => {
                let bt = self
                    .lookup(base)
                    .ok_or_else(|| Diag::new(pos, format!("use of undeclared identifier `{base}`")))?;
                if bt.rank as usize != indices.len() {
                    return Err(Diag::new(
                        pos,
                        format!("`{base}` has rank {} but is indexed with {} subscripts", bt.rank, indices.len()),
                    ));
                }
                for ix in indices {
                    let t = self.type_of(ix, pos)?;
                    if !t.is_int_scalar() {
                        return Err(Diag::new(pos, "array index expressions must have integer type"));
                    }
                }
                Ok(Type::scalar(bt.elem))
            }
            Expr::Binary { op, lhs, rhs } => {
                let lt = self.type_of(lhs, pos)?;
                let rt = self.type_of(rhs, pos)?;
                if lt.rank != 0 || rt.rank != 0 {
                    return Err(Diag::new(pos, "arrays cannot be used as scalar operands"));
                }
                if *op == BinOp::Rem && (lt.is_float() || rt.is_float()) {
                    return Err(Diag::new(pos, "`%` requires integer operands"));
                }
                if op.is_comparison() {
                    return Ok(Type::scalar(ScalarType::Int));
                }
                if lt.is_float() || rt.is_float() {
                    Ok(Type::scalar(ScalarType::Double))
                } else {
                    Ok(Type::scalar(ScalarType::Int))
                }
            }
            Expr::Neg(e) => self.type_of(e, pos),
        }
    }

    fn check_stmt(&mut self, stmt: &Stmt) -> Result<()> {
        for d in &stmt.directives {
            self.check_directive_vars(d)?;
        }
        match &stmt.kind {
            StmtKind::Decl { ty, name, init } => {
                if let Some(e) = init {
                    let t = self.type_of(e, stmt.pos)?;
                    if t.rank != 0 {
                        return Err(Diag::new(stmt.pos, "cannot initialize a scalar from an array"));
                    }
                }
                self.declare(name, Type::scalar(*ty), stmt.pos)?;
            }
            StmtKind::Assign { lhs, rhs } => {
                let lt = self.type_of(&lvalue_expr(lhs), stmt.pos)?;
                let rt = self.type_of(rhs, stmt.pos)?;
                if lt.rank != 0 || rt.rank != 0 {
                    return Err(Diag::new(stmt.pos, "assignment operands must be scalars"));
                }
                if lt.elem == ScalarType::Int && rt.is_float() {
                    return Err(Diag::new(stmt.pos, "cannot assign a floating value to an int without a cast"));
                }
            }
            StmtKind::For(f) => {
                self.scopes.push(HashMap::new());
                if f.declares {
                    self.declare(&f.var, Type::scalar(ScalarType::Int), stmt.pos)?;
                } else {
                    let t = self
                        .lookup(&f.var)
                        .ok_or_else(|| Diag::new(stmt.pos, format!("use of undeclared identifier `{}`", f.var)))?;
                    if !t.is_int_scalar() {
                        return Err(Diag::new(stmt.pos, "loop induction variable must be `int`"));
                    }
                }
                for e in [&f.init, &f.cond, &f.step] {
                    self.type_of(e, stmt.pos)?;
                }
                if stmt.directives.iter().any(|d| d.needs_loop()) {
                    for (what, e) in [("bound", &f.init), ("step", &f.step)] {
                        let t = self.type_of(e, stmt.pos)?;
                        if !t.is_int_scalar() {
                            return Err(Diag::new(stmt.pos, format!("canonical loop {what} must be an integer")));
                        }
                    }
                }
                self.check_stmt(&f.body)?;
                self.scopes.pop();
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                self.type_of(cond, stmt.pos)?;
                self.scopes.push(HashMap::new());
                self.check_stmt(then_branch)?;
                self.scopes.pop();
                if let Some(e) = else_branch {
                    self.scopes.push(HashMap::new());
                    self.check_stmt(e)?;
                    self.scopes.pop();
                }
            }
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                for s in stmts {
                    self.check_stmt(s)?;
                }
                self.scopes.pop();
            }
            StmtKind::Call { callee, args, launch } => {
                let f = self
                    .program
                    .function(callee)
                    .ok_or_else(|| Diag::new(stmt.pos, format!("callee `{callee}` not found")))?;
                if f.params.len() != args.len() {
                    return Err(Diag::new(
                        stmt.pos,
                        format!("`{callee}` takes {} arguments, {} given", f.params.len(), args.len()),
                    ));
                }
                for (p, a) in f.params.iter().zip(args) {
                    let at = self.type_of(a, stmt.pos)?;
                    if p.ty.rank != at.rank {
                        return Err(Diag::new(stmt.pos, format!("argument for `{}` has mismatched rank", p.name)));
                    }
                    if p.ty.rank == 0 && p.ty.elem == ScalarType::Int && at.is_float() {
                        return Err(Diag::new(stmt.pos, format!("argument for `{}` must be an integer", p.name)));
                    }
                }
                if let Some((g, b)) = launch {
                    if !f.is_kernel {
                        return Err(Diag::new(stmt.pos, format!("`{callee}` is not a kernel (missing `__global__`)")));
                    }
                    for e in [g, b] {
                        let t = self.type_of(e, stmt.pos)?;
                        if !t.is_int_scalar() {
                            return Err(Diag::new(stmt.pos, "launch configuration expressions must be integers"));
                        }
                    }
                }
            }
            StmtKind::Return(value) => {
                if let Some(e) = value {
                    self.type_of(e, stmt.pos)?;
                }
            }
            StmtKind::Empty => {}
        }
        Ok(())
    }

    fn check_directive_vars(&self, d: &Directive) -> Result<()> {
        let mut vars: Vec<&VarRef> = Vec::new();
        let mut exprs: Vec<&Expr> = Vec::new();
        for c in &d.clauses {
            match c {
                Clause::NumThreads(e)
                | Clause::NumTeams(e)
                | Clause::NumGangs(e)
                | Clause::NumWorkers(e)
                | Clause::VectorLength(e)
                | Clause::Simdlen(e)
                | Clause::Grainsize(e)
                | Clause::NumTasks(e)
                | Clause::Device(e) => exprs.push(e),
                Clause::Schedule { chunk: Some(e), .. } => exprs.push(e),
                Clause::Reduction { vars: v, .. }
                | Clause::Map { vars: v, .. }
                | Clause::Private(v)
                | Clause::Firstprivate(v)
                | Clause::Lastprivate(v)
                | Clause::Shared(v)
                | Clause::Depend { vars: v, .. }
                | Clause::Copyin(v)
                | Clause::Copyout(v)
                | Clause::Copy(v)
                | Clause::Create(v)
                | Clause::UpdateTo(v)
                | Clause::UpdateFrom(v) => vars.extend(v.iter()),
                _ => {}
            }
        }
        for e in exprs {
            self.type_of(e, d.pos)?;
        }
        for v in vars {
            if self.lookup(&v.name).is_none() {
                return Err(Diag::new(d.pos, format!("use of undeclared identifier `{}` in clause", v.name)));
            }
            for s in &v.sections {
                for e in [Some(&s.lower), s.length.as_ref(), s.stride.as_ref()].into_iter().flatten() {
                    let t = self.type_of(e, d.pos)?;
                    if !t.is_int_scalar() {
                        return Err(Diag::new(d.pos, "array section bounds must be integers"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_program(program: &mut Program) -> Result<()> {
    // Attach cuda-launch directives before checking.
    let snapshot = program.clone();
    for func in &mut program.functions {
        for stmt in &mut func.body {
            attach_launches(&snapshot, stmt)?;
        }
    }
    let snapshot = program.clone();
    for func in &snapshot.functions {
        let mut checker = Checker { program: &snapshot, scopes: vec![HashMap::new()] };
        for p in &func.params {
            checker.declare(&p.name, p.ty, func.pos)?;
        }
        checker.scopes.push(HashMap::new());
        for stmt in &func.body {
            checker.check_stmt(stmt)?;
        }
    }
    Ok(())
}

fn attach_launches(program: &Program, stmt: &mut Stmt) -> Result<()> {
    if let StmtKind::Call { launch: Some(_), .. } = &stmt.kind {
        let d = recognize_cuda_launch(program, stmt)?;
        stmt.directives.push(d);
    }
    match &mut stmt.kind {
        StmtKind::For(f) => attach_launches(program, &mut f.body)?,
        StmtKind::If { then_branch, else_branch, .. } => {
            attach_launches(program, then_branch)?;
            if let Some(e) = else_branch {
                attach_launches(program, e)?;
            }
        }
        StmtKind::Block(stmts) => {
            for s in stmts {
                attach_launches(program, s)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Turn a chevron launch statement into a cuda-launch `Directive`. The callee
/// must be a kernel function in the same program.
pub fn recognize_cuda_launch(program: &Program, stmt: &Stmt) -> Result<Directive> {
    let StmtKind::Call { callee, launch: Some((grid, block)), .. } = &stmt.kind else {
        return Err(Diag::new(stmt.pos, "statement is not a chevron launch"));
    };
    let f = program
        .function(callee)
        .ok_or_else(|| Diag::new(stmt.pos, format!("callee `{callee}` not found")))?;
    if !f.is_kernel {
        return Err(Diag::new(stmt.pos, format!("`{callee}` is not a kernel (missing `__global__`)")));
    }
    Ok(Directive {
        source_language: SourceLanguage::CudaLaunch,
        constructs: Vec::new(),
        clauses: Vec::new(),
        construct_arg: None,
        launch_config: Some((grid.clone(), block.clone())),
        pos: stmt.pos,
    })
}
