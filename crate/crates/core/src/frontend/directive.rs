//! OpenMP and OpenACC pragma-line parsing.
//!
//! Combined constructs are split into ordered atomic construct lists here so
//! the IR builder only ever sees one construct at a time. Clauses outside the
//! supported grammar are preserved verbatim as extension clauses.

use crate::ast::*;
use crate::diag::{Diag, Pos, Result};
use crate::frontend::lexer::{Lexer, Tok};
use crate::frontend::parser::Cursor;

/// Parse a full `#pragma omp ...` line.
pub fn parse_omp_directive(text: &str) -> Result<Directive> {
    let payload = strip_pragma(text)?;
    if !payload.starts_with("omp") {
        return Err(Diag::at(1, 1, "not an `omp` pragma"));
    }
    parse_pragma(payload, Pos::new(1, 1))
}

/// Parse a full `#pragma acc ...` line.
pub fn parse_acc_directive(text: &str) -> Result<Directive> {
    let payload = strip_pragma(text)?;
    if !payload.starts_with("acc") {
        return Err(Diag::at(1, 1, "not an `acc` pragma"));
    }
    parse_pragma(payload, Pos::new(1, 1))
}

fn strip_pragma(text: &str) -> Result<&str> {
    text.trim()
        .strip_prefix("#pragma")
        .map(str::trim)
        .ok_or_else(|| Diag::at(1, 1, "pragma line must start with `#pragma`"))
}

/// Parse a pragma payload (`omp ...` / `acc ...`) located at `pos`.
pub(crate) fn parse_pragma(payload: &str, pos: Pos) -> Result<Directive> {
    let toks = Lexer::tokenize_at(payload, pos)?;
    let mut cur = Cursor::new(toks);
    let (lang_name, lpos) = cur.expect_ident("`omp` or `acc`")?;
    let lang = match lang_name.as_str() {
        "omp" => SourceLanguage::OpenMp,
        "acc" => SourceLanguage::OpenAcc,
        other => return Err(Diag::new(lpos, format!("unsupported pragma namespace `{other}`"))),
    };
    let (constructs, construct_arg) = parse_constructs(&mut cur, lang)?;
    let clauses = parse_clauses(&mut cur, lang, payload, constructs.contains(&Construct::Update))?;
    if !cur.at_eof() {
        return Err(Diag::new(cur.pos(), "trailing tokens after clause list"));
    }
    Ok(Directive { source_language: lang, constructs, clauses, construct_arg, launch_config: None, pos })
}

fn construct_keyword(lang: SourceLanguage, word: &str) -> Option<Construct> {
    use Construct::*;
    match (lang, word) {
        (SourceLanguage::OpenMp, "target") => Some(Target),
        (SourceLanguage::OpenMp, "teams") => Some(Teams),
        (SourceLanguage::OpenMp, "distribute") => Some(Distribute),
        (SourceLanguage::OpenMp, "parallel") => Some(Parallel),
        (SourceLanguage::OpenMp, "for") => Some(For),
        (SourceLanguage::OpenMp, "simd") => Some(Simd),
        (SourceLanguage::OpenMp, "task") => Some(Task),
        (SourceLanguage::OpenMp, "taskloop") => Some(Taskloop),
        (SourceLanguage::OpenMp, "barrier") => Some(Barrier),
        (SourceLanguage::OpenMp, "taskwait") => Some(Taskwait),
        (SourceLanguage::OpenMp, "critical") => Some(Critical),
        (SourceLanguage::OpenMp, "atomic") => Some(Atomic),
        (SourceLanguage::OpenMp, "single") => Some(Single),
        (SourceLanguage::OpenMp, "data") => Some(Data),
        (SourceLanguage::OpenMp, "update") => Some(Update),
        (SourceLanguage::OpenAcc, "parallel") => Some(Parallel),
        (SourceLanguage::OpenAcc, "loop") => Some(Loop),
        (SourceLanguage::OpenAcc, "data") => Some(Data),
        (SourceLanguage::OpenAcc, "update") => Some(Update),
        (SourceLanguage::OpenAcc, "wait") => Some(Wait),
        _ => None,
    }
}

/// Legal continuations in a combined construct, outermost to innermost.
fn may_follow(lang: SourceLanguage, prev: Construct, next: Construct) -> bool {
    use Construct::*;
    match lang {
        SourceLanguage::OpenMp => matches!(
            (prev, next),
            (Target, Teams)
                | (Target, Parallel)
                | (Target, Simd)
                | (Target, Data)
                | (Target, Update)
                | (Teams, Distribute)
                | (Teams, Parallel)
                | (Distribute, Parallel)
                | (Distribute, Simd)
                | (Parallel, For)
                | (For, Simd)
                | (Taskloop, Simd)
        ),
        SourceLanguage::OpenAcc => matches!((prev, next), (Parallel, Loop)),
        SourceLanguage::CudaLaunch => false,
    }
}

fn parse_constructs(cur: &mut Cursor, lang: SourceLanguage) -> Result<(Vec<Construct>, Option<String>)> {
    let (first, fpos) = cur.expect_ident("construct")?;
    let Some(first) = construct_keyword(lang, &first) else {
        return Err(Diag::new(fpos, format!("unknown construct `{first}`")));
    };
    if matches!(first, Construct::Data | Construct::Update) && lang == SourceLanguage::OpenMp {
        return Err(Diag::new(fpos, format!("`{}` requires a leading `target`", first.keyword())));
    }
    let mut constructs = vec![first];
    let mut construct_arg = None;
    if first == Construct::Critical && *cur.peek() == Tok::LParen {
        cur.bump();
        let (name, _) = cur.expect_ident("critical section name")?;
        cur.expect(&Tok::RParen, "`)`")?;
        construct_arg = Some(name);
    }
    loop {
        let Tok::Ident(word) = cur.peek().clone() else { break };
        let Some(c) = construct_keyword(lang, &word) else { break };
        if !may_follow(lang, *constructs.last().unwrap(), c) {
            break;
        }
        cur.bump();
        constructs.push(c);
    }
    Ok((constructs, construct_arg))
}

/// Clause kinds that may appear at most once per directive.
fn exclusive_key(c: &Clause) -> Option<&'static str> {
    Some(match c {
        Clause::NumThreads(_) => "num_threads",
        Clause::NumTeams(_) => "num_teams",
        Clause::NumGangs(_) => "num_gangs",
        Clause::NumWorkers(_) => "num_workers",
        Clause::VectorLength(_) => "vector_length",
        Clause::Schedule { .. } => "schedule",
        Clause::Collapse(_) => "collapse",
        Clause::Simdlen(_) => "simdlen",
        Clause::Grainsize(_) => "grainsize",
        Clause::NumTasks(_) => "num_tasks",
        Clause::Device(_) => "device",
        Clause::Policy(_) => "policy",
        Clause::Async(_) => "async",
        Clause::Nowait => "nowait",
        _ => return None,
    })
}

fn parse_clauses(cur: &mut Cursor, lang: SourceLanguage, payload: &str, on_update: bool) -> Result<Vec<Clause>> {
    let mut clauses = Vec::new();
    let mut seen: Vec<&'static str> = Vec::new();
    while !cur.at_eof() {
        let cpos = cur.pos();
        let (name, _) = cur.expect_ident("clause name")?;
        let clause = parse_one_clause(cur, lang, &name, payload, on_update, cpos)?;
        if let Some(key) = exclusive_key(&clause) {
            if seen.contains(&key) {
                return Err(Diag::new(cpos, format!("duplicate `{key}` clause")));
            }
            seen.push(key);
        }
        clauses.push(clause);
        cur.eat(&Tok::Comma);
    }
    Ok(clauses)
}

fn parse_one_clause(
    cur: &mut Cursor,
    lang: SourceLanguage,
    name: &str,
    payload: &str,
    on_update: bool,
    cpos: Pos,
) -> Result<Clause> {
    let omp = lang == SourceLanguage::OpenMp;
    let acc = lang == SourceLanguage::OpenAcc;
    match name {
        "num_threads" if omp => Ok(Clause::NumThreads(paren_expr(cur)?)),
        "num_teams" if omp => Ok(Clause::NumTeams(paren_expr(cur)?)),
        "num_gangs" if acc => Ok(Clause::NumGangs(paren_expr(cur)?)),
        "num_workers" if acc => Ok(Clause::NumWorkers(paren_expr(cur)?)),
        "vector_length" if acc => Ok(Clause::VectorLength(paren_expr(cur)?)),
        "simdlen" if omp => Ok(Clause::Simdlen(paren_expr(cur)?)),
        "grainsize" if omp => Ok(Clause::Grainsize(paren_expr(cur)?)),
        "num_tasks" if omp => Ok(Clause::NumTasks(paren_expr(cur)?)),
        "device" if omp => Ok(Clause::Device(paren_expr(cur)?)),
        "collapse" => {
            let e = paren_expr(cur)?;
            let n = e
                .as_int_const()
                .ok_or_else(|| Diag::new(cpos, "collapse argument must be an integer constant"))?;
            if n < 1 {
                return Err(Diag::new(cpos, "collapse argument must be >= 1"));
            }
            Ok(Clause::Collapse(n))
        }
        "schedule" if omp => {
            cur.expect(&Tok::LParen, "`(`")?;
            let (pword, ppos) = cur.expect_ident("schedule policy")?;
            let policy = match pword.as_str() {
                "static" => SchedulePolicy::Static,
                "dynamic" => SchedulePolicy::Dynamic,
                "guided" => SchedulePolicy::Guided,
                "runtime" => SchedulePolicy::Runtime,
                "auto" => SchedulePolicy::Auto,
                other => return Err(Diag::new(ppos, format!("unknown schedule policy `{other}`"))),
            };
            let chunk = if cur.eat(&Tok::Comma) { Some(cur.parse_expr()?) } else { None };
            cur.expect(&Tok::RParen, "`)`")?;
            Ok(Clause::Schedule { policy, chunk })
        }
        "reduction" => {
            cur.expect(&Tok::LParen, "`(`")?;
            let op = match cur.bump().tok {
                Tok::Plus => ReductionOp::Add,
                Tok::Minus => ReductionOp::Sub,
                Tok::Star => ReductionOp::Mul,
                Tok::Ident(w) => ReductionOp::parse(&w)
                    .ok_or_else(|| Diag::new(cpos, format!("unknown reduction operator `{w}`")))?,
                other => return Err(Diag::new(cpos, format!("malformed reduction operator {other:?}"))),
            };
            cur.expect(&Tok::Colon, "`:`")?;
            let vars = parse_var_list(cur)?;
            cur.expect(&Tok::RParen, "`)`")?;
            Ok(Clause::Reduction { op, vars })
        }
        "map" if omp => {
            cur.expect(&Tok::LParen, "`(`")?;
            let kind = if let Tok::Ident(w) = cur.peek().clone() {
                let k = match w.as_str() {
                    "to" => Some(MapKind::To),
                    "from" => Some(MapKind::From),
                    "tofrom" => Some(MapKind::ToFrom),
                    "alloc" => Some(MapKind::Alloc),
                    _ => None,
                };
                match k {
                    Some(k) if *cur.peek2() == Tok::Colon => {
                        cur.bump();
                        cur.bump();
                        k
                    }
                    _ => MapKind::ToFrom,
                }
            } else {
                MapKind::ToFrom
            };
            let vars = parse_var_list(cur)?;
            cur.expect(&Tok::RParen, "`)`")?;
            Ok(Clause::Map { kind, vars })
        }
        "depend" if omp => {
            cur.expect(&Tok::LParen, "`(`")?;
            let (mword, mposn) = cur.expect_ident("dependence mode")?;
            let mode = match mword.as_str() {
                "in" => DependMode::In,
                "out" => DependMode::Out,
                "inout" => DependMode::InOut,
                other => return Err(Diag::new(mposn, format!("unknown dependence mode `{other}`"))),
            };
            cur.expect(&Tok::Colon, "`:`")?;
            let vars = parse_var_list(cur)?;
            cur.expect(&Tok::RParen, "`)`")?;
            Ok(Clause::Depend { mode, vars })
        }
        "private" => Ok(Clause::Private(paren_var_list(cur)?)),
        "firstprivate" => Ok(Clause::Firstprivate(paren_var_list(cur)?)),
        "lastprivate" if omp => Ok(Clause::Lastprivate(paren_var_list(cur)?)),
        "shared" if omp => Ok(Clause::Shared(paren_var_list(cur)?)),
        "nowait" if omp => Ok(Clause::Nowait),
        "policy" if omp => {
            cur.expect(&Tok::LParen, "`(`")?;
            let word = parse_hyphen_ident(cur)?;
            let p = match word.as_str() {
                "help-first" => TaskPolicy::HelpFirst,
                "work-first" => TaskPolicy::WorkFirst,
                other => return Err(Diag::new(cpos, format!("unknown task policy `{other}`"))),
            };
            cur.expect(&Tok::RParen, "`)`")?;
            Ok(Clause::Policy(p))
        }
        "to" if omp && on_update => Ok(Clause::UpdateTo(paren_var_list(cur)?)),
        "from" if omp && on_update => Ok(Clause::UpdateFrom(paren_var_list(cur)?)),
        "device" if acc && on_update => Ok(Clause::UpdateTo(paren_var_list(cur)?)),
        "self" | "host" if acc && on_update => Ok(Clause::UpdateFrom(paren_var_list(cur)?)),
        "gang" | "worker" | "vector" if acc => {
            if *cur.peek() == Tok::LParen {
                return Err(Diag::new(cpos, format!("malformed clause: `{name}` takes no argument")));
            }
            Ok(match name {
                "gang" => Clause::Gang,
                "worker" => Clause::Worker,
                _ => Clause::Vector,
            })
        }
        "copyin" if acc => Ok(Clause::Copyin(paren_var_list(cur)?)),
        "copyout" if acc => Ok(Clause::Copyout(paren_var_list(cur)?)),
        "copy" if acc => Ok(Clause::Copy(paren_var_list(cur)?)),
        "create" if acc => Ok(Clause::Create(paren_var_list(cur)?)),
        "async" if acc => {
            let arg = if *cur.peek() == Tok::LParen {
                cur.bump();
                let e = cur.parse_expr()?;
                cur.expect(&Tok::RParen, "`)`")?;
                Some(e)
            } else {
                None
            };
            Ok(Clause::Async(arg))
        }
        "wait" if acc => {
            let arg = if *cur.peek() == Tok::LParen {
                cur.bump();
                let e = cur.parse_expr()?;
                cur.expect(&Tok::RParen, "`)`")?;
                Some(e)
            } else {
                None
            };
            Ok(Clause::WaitClause(arg))
        }
        // Unsupported but well-formed clauses survive as extensions.
        _ => {
            let payload_text = if *cur.peek() == Tok::LParen {
                let open = cur.off();
                cur.bump();
                let mut depth = 1usize;
                let mut close = open;
                while depth > 0 {
                    if cur.at_eof() {
                        return Err(Diag::new(cpos, format!("unbalanced parentheses in clause `{name}`")));
                    }
                    close = cur.off();
                    match cur.bump().tok {
                        Tok::LParen => depth += 1,
                        Tok::RParen => depth -= 1,
                        _ => {}
                    }
                }
                Some(payload[open + 1..close].trim().to_string())
            } else {
                None
            };
            Ok(Clause::Extension { name: name.to_string(), payload: payload_text })
        }
    }
}

fn parse_hyphen_ident(cur: &mut Cursor) -> Result<String> {
    let (mut word, _) = cur.expect_ident("identifier")?;
    while cur.eat(&Tok::Minus) {
        let (next, _) = cur.expect_ident("identifier")?;
        word.push('-');
        word.push_str(&next);
    }
    Ok(word)
}

fn paren_expr(cur: &mut Cursor) -> Result<Expr> {
    cur.expect(&Tok::LParen, "`(`")?;
    let e = cur.parse_expr()?;
    cur.expect(&Tok::RParen, "`)`")?;
    Ok(e)
}

fn paren_var_list(cur: &mut Cursor) -> Result<Vec<VarRef>> {
    cur.expect(&Tok::LParen, "`(`")?;
    let vars = parse_var_list(cur)?;
    cur.expect(&Tok::RParen, "`)`")?;
    Ok(vars)
}

/// `x`, `x[lower : length : stride]` (stride and length optional), up to two
/// sections, comma separated.
fn parse_var_list(cur: &mut Cursor) -> Result<Vec<VarRef>> {
    let mut out = Vec::new();
    loop {
        let (name, _) = cur.expect_ident("variable name")?;
        let mut sections = Vec::new();
        while cur.eat(&Tok::LBracket) {
            let lower = cur.parse_expr()?;
            let mut length = None;
            let mut stride = None;
            if cur.eat(&Tok::Colon) {
                length = Some(cur.parse_expr()?);
                if cur.eat(&Tok::Colon) {
                    stride = Some(cur.parse_expr()?);
                }
            }
            cur.expect(&Tok::RBracket, "`]`")?;
            sections.push(ArraySection { lower, length, stride });
        }
        out.push(VarRef { name, sections });
        if !cur.eat(&Tok::Comma) {
            return Ok(out);
        }
    }
}

// ---------------------------------------------------------------------------
// Canonical rendering
// ---------------------------------------------------------------------------

/// Render a directive back to a canonical pragma line. Re-parsing the result
/// yields an equal `Directive`.
pub fn render_directive(d: &Directive) -> String {
    let mut s = String::from("#pragma ");
    s.push_str(match d.source_language {
        SourceLanguage::OpenMp => "omp",
        SourceLanguage::OpenAcc => "acc",
        SourceLanguage::CudaLaunch => return String::new(),
    });
    for c in &d.constructs {
        s.push(' ');
        s.push_str(c.keyword());
        if *c == Construct::Critical {
            if let Some(arg) = &d.construct_arg {
                s.push_str(&format!("({arg})"));
            }
        }
    }
    for c in &d.clauses {
        s.push(' ');
        s.push_str(&render_clause(c, d.source_language));
    }
    s
}

fn render_vars(vars: &[VarRef]) -> String {
    vars.iter()
        .map(|v| {
            let mut t = v.name.clone();
            for sec in &v.sections {
                t.push('[');
                t.push_str(&sec.lower.to_string());
                if let Some(len) = &sec.length {
                    t.push_str(&format!(":{len}"));
                    if let Some(st) = &sec.stride {
                        t.push_str(&format!(":{st}"));
                    }
                }
                t.push(']');
            }
            t
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_clause(c: &Clause, lang: SourceLanguage) -> String {
    match c {
        Clause::NumThreads(e) => format!("num_threads({e})"),
        Clause::NumTeams(e) => format!("num_teams({e})"),
        Clause::NumGangs(e) => format!("num_gangs({e})"),
        Clause::NumWorkers(e) => format!("num_workers({e})"),
        Clause::VectorLength(e) => format!("vector_length({e})"),
        Clause::Schedule { policy, chunk } => match chunk {
            Some(ch) => format!("schedule({}, {ch})", policy.keyword()),
            None => format!("schedule({})", policy.keyword()),
        },
        Clause::Collapse(n) => format!("collapse({n})"),
        Clause::Simdlen(e) => format!("simdlen({e})"),
        Clause::Grainsize(e) => format!("grainsize({e})"),
        Clause::NumTasks(e) => format!("num_tasks({e})"),
        Clause::Reduction { op, vars } => format!("reduction({}: {})", op.symbol(), render_vars(vars)),
        Clause::Map { kind, vars } => {
            let k = match kind {
                MapKind::To => "to",
                MapKind::From => "from",
                MapKind::ToFrom => "tofrom",
                MapKind::Alloc => "alloc",
            };
            format!("map({k}: {})", render_vars(vars))
        }
        Clause::Private(v) => format!("private({})", render_vars(v)),
        Clause::Firstprivate(v) => format!("firstprivate({})", render_vars(v)),
        Clause::Lastprivate(v) => format!("lastprivate({})", render_vars(v)),
        Clause::Shared(v) => format!("shared({})", render_vars(v)),
        Clause::Depend { mode, vars } => format!("depend({}: {})", mode.keyword(), render_vars(vars)),
        Clause::Device(e) => format!("device({e})"),
        Clause::Nowait => "nowait".into(),
        Clause::Gang => "gang".into(),
        Clause::Worker => "worker".into(),
        Clause::Vector => "vector".into(),
        Clause::Copyin(v) => format!("copyin({})", render_vars(v)),
        Clause::Copyout(v) => format!("copyout({})", render_vars(v)),
        Clause::Copy(v) => format!("copy({})", render_vars(v)),
        Clause::Create(v) => format!("create({})", render_vars(v)),
        Clause::Async(None) => "async".into(),
        Clause::Async(Some(e)) => format!("async({e})"),
        Clause::WaitClause(None) => "wait".into(),
        Clause::WaitClause(Some(e)) => format!("wait({e})"),
        Clause::UpdateTo(v) if lang == SourceLanguage::OpenAcc => {
            format!("device({})", render_vars(v))
        }
        Clause::UpdateTo(v) => format!("to({})", render_vars(v)),
        Clause::UpdateFrom(v) if lang == SourceLanguage::OpenAcc => {
            format!("self({})", render_vars(v))
        }
        Clause::UpdateFrom(v) => format!("from({})", render_vars(v)),
        Clause::Policy(p) => format!("policy({})", p.keyword()),
        Clause::Extension { name, payload } => match payload {
            Some(p) => format!("{name}({p})"),
            None => name.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_parallel_for_with_num_threads() {
        let d = parse_omp_directive("#pragma omp target parallel for num_threads(1024)").unwrap();
        assert_eq!(d.constructs, vec![Construct::Target, Construct::Parallel, Construct::For]);
        assert_eq!(d.clauses.len(), 1);
        let Clause::NumThreads(e) = &d.clauses[0] else { panic!() };
        assert_eq!(e.as_int_const(), Some(1024));
    }

    #[test]
    fn bare_parallel() {
        let d = parse_omp_directive("#pragma omp parallel").unwrap();
        assert_eq!(d.constructs, vec![Construct::Parallel]);
        assert!(d.clauses.is_empty());
    }

    #[test]
    fn schedule_reduction_nowait() {
        let d = parse_omp_directive("#pragma omp for schedule(static, 2) reduction(+: sum) nowait").unwrap();
        assert_eq!(d.constructs, vec![Construct::For]);
        assert_eq!(d.clauses.len(), 3);
        let Clause::Schedule { policy, chunk } = &d.clauses[0] else { panic!() };
        assert_eq!(*policy, SchedulePolicy::Static);
        assert_eq!(chunk.as_ref().unwrap().as_int_const(), Some(2));
        let Clause::Reduction { op, vars } = &d.clauses[1] else { panic!() };
        assert_eq!(*op, ReductionOp::Add);
        assert_eq!(vars[0].name, "sum");
        assert_eq!(d.clauses[2], Clause::Nowait);
    }

    #[test]
    fn acc_parallel_loop_num_workers() {
        let d = parse_acc_directive("#pragma acc parallel loop num_workers(1024)").unwrap();
        assert_eq!(d.constructs, vec![Construct::Parallel, Construct::Loop]);
        let Clause::NumWorkers(e) = &d.clauses[0] else { panic!() };
        assert_eq!(e.as_int_const(), Some(1024));
    }

    #[test]
    fn acc_data_with_sections() {
        let d = parse_acc_directive("#pragma acc data copyin(x[0:n]) copyout(y[0:n])").unwrap();
        assert_eq!(d.constructs, vec![Construct::Data]);
        let Clause::Copyin(vars) = &d.clauses[0] else { panic!() };
        let sec = &vars[0].sections[0];
        assert_eq!(sec.lower.as_int_const(), Some(0));
        assert_eq!(sec.length.as_ref().unwrap(), &Expr::ident("n"));
        assert!(sec.stride.is_none());
    }

    #[test]
    fn acc_vector_with_argument_is_malformed() {
        let err = parse_acc_directive("#pragma acc loop vector(33)").unwrap_err();
        assert!(err.msg.contains("malformed clause"), "{err}");
    }

    #[test]
    fn unknown_construct_rejected() {
        let err = parse_omp_directive("#pragma omp metadirective when(x)").unwrap_err();
        assert!(err.msg.contains("unknown construct"), "{err}");
    }

    #[test]
    fn unknown_clause_becomes_extension() {
        let d = parse_omp_directive("#pragma omp parallel proc_bind(close)").unwrap();
        assert_eq!(
            d.clauses[0],
            Clause::Extension { name: "proc_bind".into(), payload: Some("close".into()) }
        );
    }

    #[test]
    fn duplicate_schedule_rejected() {
        let err = parse_omp_directive("#pragma omp for schedule(static) schedule(dynamic)").unwrap_err();
        assert!(err.msg.contains("duplicate"), "{err}");
    }

    #[test]
    fn render_reparse_fixpoint() {
        for line in [
            "#pragma omp target parallel for num_threads(1024)",
            "#pragma omp for schedule(static, 2) reduction(+: sum) nowait",
            "#pragma omp target teams distribute parallel for collapse(2) num_teams(4) num_threads(64)",
            "#pragma omp target data map(to: x[0:n]) map(from: y[0:n])",
            "#pragma omp task depend(in: x) policy(help-first)",
            "#pragma omp taskloop grainsize(8)",
        ] {
            let d = parse_omp_directive(line).unwrap();
            let rendered = render_directive(&d);
            let d2 = parse_omp_directive(&rendered).unwrap();
            assert_eq!(strip_pos(d), strip_pos(d2), "{rendered}");
        }
        for line in [
            "#pragma acc parallel loop num_workers(1024)",
            "#pragma acc parallel loop gang worker num_gangs(4) num_workers(64)",
            "#pragma acc data copyin(x[0:n]) copyout(y[0:n:1])",
            "#pragma acc update device(x) wait",
            "#pragma acc parallel async(3)",
        ] {
            let d = parse_acc_directive(line).unwrap();
            let rendered = render_directive(&d);
            let d2 = parse_acc_directive(&rendered).unwrap();
            assert_eq!(strip_pos(d), strip_pos(d2), "{rendered}");
        }
    }

    fn strip_pos(mut d: Directive) -> Directive {
        d.pos = Pos::default();
        d
    }
}
