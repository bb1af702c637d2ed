//! Canonical textual form of UPIR.
//!
//! One operation per line, fields in the fixed order of each node's grammar,
//! two-space indentation per region depth, LF line endings. Integer constants
//! print as `%cN`, float constants as `%fN`, symbols as `%name`, node
//! references as `%nK` where K is the node's module pre-order position.
//! Byte-identity tests depend on this form; change it deliberately.

use crate::ast::{ArraySection, BinOp, DependMode, Expr, VarRef};
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::HashMap;
use std::fmt::Write;

/// Print a module in canonical form. References are emitted positionally, so
/// the output is independent of the concrete id values.
pub fn print_upir(module: &Module) -> Result<String> {
    let mut positions: HashMap<NodeId, u32> = HashMap::new();
    let mut counter = 0u32;
    let mut duplicate = None;
    module.walk(&mut |n| {
        if positions.insert(n.id, counter).is_some() && duplicate.is_none() {
            duplicate = Some(n.id);
        }
        counter += 1;
    });
    if let Some(id) = duplicate {
        return Err(Diag::new(Pos::default(), format!("duplicate node id {id}")));
    }
    let p = Printer { positions };
    let mut out = String::from("module {\n");
    for f in &module.functions {
        p.print_function(&mut out, f)?;
    }
    out.push_str("}\n");
    Ok(out)
}

struct Printer {
    positions: HashMap<NodeId, u32>,
}

impl Printer {
    fn node_ref(&self, id: NodeId) -> Result<String> {
        match self.positions.get(&id) {
            Some(k) => Ok(format!("%n{k}")),
            None => Err(Diag::new(Pos::default(), format!("dangling node reference {id}"))),
        }
    }

    fn node_refs(&self, ids: &[NodeId]) -> Result<String> {
        Ok(ids.iter().map(|i| self.node_ref(*i)).collect::<Result<Vec<_>>>()?.join(", "))
    }

    fn print_function(&self, out: &mut String, f: &UpirFunction) -> Result<()> {
        let params = f
            .params
            .iter()
            .map(|p| format!("%{} : {}", p.name, p.ty))
            .collect::<Vec<_>>()
            .join(", ");
        let ret = match f.ret {
            Some(t) => format!(" -> {t}"),
            None => String::new(),
        };
        let kernel = if f.is_kernel { " kernel" } else { "" };
        let _ = writeln!(out, "  func @{}({params}){ret}{kernel} {{", f.name);
        self.print_region(out, &f.body, 2)?;
        out.push_str("  }\n");
        Ok(())
    }

    fn print_region(&self, out: &mut String, region: &Region, depth: usize) -> Result<()> {
        for node in &region.nodes {
            self.print_node(out, node, depth)?;
        }
        Ok(())
    }

    fn print_node(&self, out: &mut String, node: &Node, depth: usize) -> Result<()> {
        let pad = "  ".repeat(depth);
        match &node.kind {
            NodeKind::Spmd(s) => {
                let mut line = format!("{pad}upir.spmd");
                if !s.targets.is_empty() {
                    let t = s.targets.iter().map(|t| t.keyword()).collect::<Vec<_>>().join(", ");
                    let _ = write!(line, " target({t})");
                }
                if let Some(e) = &s.num_teams {
                    let _ = write!(line, " num_teams({})", pe(e));
                }
                if let Some(e) = &s.num_units {
                    let _ = write!(line, " num_units({})", pe(e));
                }
                self.write_data(&mut line, &s.data)?;
                if let Some(p) = s.nested_parent {
                    let _ = write!(line, " nested-parent({})", self.node_ref(p)?);
                }
                if let Some(c) = s.nested_child {
                    let _ = write!(line, " nested-child({})", self.node_ref(c)?);
                }
                if let Some(l) = s.nested_level {
                    let _ = write!(line, " nested-level({l})");
                }
                if !s.branch.is_empty() {
                    let _ = write!(line, " branch({})", self.node_refs(&s.branch)?);
                }
                if !s.sync.is_empty() {
                    let _ = write!(line, " sync({})", self.node_refs(&s.sync)?);
                }
                let _ = writeln!(out, "{line} {{");
                self.print_region(out, &s.body, depth + 1)?;
                let _ = writeln!(out, "{pad}}}");
            }
            NodeKind::Loop(l) => {
                let mut line = format!(
                    "{pad}upir.loop induction(%{}) lowerBound({}) upperBound({}) step({})",
                    l.induction,
                    pe(&l.lower),
                    pe(&l.upper),
                    pe(&l.step)
                );
                self.write_data(&mut line, &l.data)?;
                let _ = write!(line, " collapse({})", l.collapse);
                if !l.sync.is_empty() {
                    let _ = write!(line, " sync({})", self.node_refs(&l.sync)?);
                }
                if l.nowait {
                    line.push_str(" nowait");
                }
                let _ = writeln!(out, "{line} {{");
                match &l.parallel {
                    Some(lp) => {
                        let ipad = "  ".repeat(depth + 1);
                        let _ = writeln!(out, "{ipad}upir.loop_parallel {} {{", print_lp(lp));
                        self.print_region(out, &l.body, depth + 2)?;
                        let _ = writeln!(out, "{ipad}}}");
                    }
                    None => self.print_region(out, &l.body, depth + 1)?,
                }
                let _ = writeln!(out, "{pad}}}");
            }
            NodeKind::Task(t) => {
                let mut line = format!("{pad}upir.task");
                match (t.kind, &t.device) {
                    (TaskKind::Offload, Some((d, id))) => {
                        let _ = write!(line, " offload({}:{id})", d.keyword());
                    }
                    (TaskKind::Remote, Some((d, id))) => {
                        let _ = write!(line, " remote({}:{id})", d.keyword());
                    }
                    _ => {}
                }
                if t.is_async {
                    line.push_str(" async");
                }
                write_depend(&mut line, &t.depend);
                self.write_data(&mut line, &t.data)?;
                if !t.sync.is_empty() {
                    let _ = write!(line, " sync({})", self.node_refs(&t.sync)?);
                }
                if let Some(p) = t.policy {
                    let _ = write!(line, " policy({})", p.keyword());
                }
                let _ = writeln!(out, "{line} {{");
                self.print_region(out, &t.body, depth + 1)?;
                let _ = writeln!(out, "{pad}}}");
            }
            NodeKind::DataRegion(d) => {
                let items = d.data.iter().map(print_data_item).collect::<Vec<_>>().join(", ");
                let _ = writeln!(out, "{pad}upir.data({items}) {{");
                self.print_region(out, &d.body, depth + 1)?;
                let _ = writeln!(out, "{pad}}}");
            }
            NodeKind::DataMovement(m) => {
                let mut line = format!(
                    "{pad}upir.data_movement({}, %{}, {}, %{}, {}) {} memcpy({})",
                    m.dest_space,
                    m.dest,
                    m.src_space,
                    m.src,
                    pe(&m.size),
                    m.direction.keyword(),
                    print_memcpy(&m.memcpy)
                );
                write_depend(&mut line, &m.depend);
                let _ = writeln!(out, "{line}");
            }
            NodeKind::DataUpdate(u) => {
                let syms = u.data.iter().map(|s| format!("%{s}")).collect::<Vec<_>>().join(", ");
                let mut line = format!(
                    "{pad}upir.data_update({syms}) {} memcpy({})",
                    u.direction.keyword(),
                    print_memcpy(&u.memcpy)
                );
                write_depend(&mut line, &u.depend);
                let _ = writeln!(out, "{line}");
            }
            NodeKind::MmAlloc(a) => {
                let _ = writeln!(
                    out,
                    "{pad}upir.mm_allocator({}) %{} size({})",
                    print_allocator(&a.allocator),
                    a.symbol,
                    pe(&a.size)
                );
            }
            NodeKind::MmDealloc(d) => {
                let _ = writeln!(
                    out,
                    "{pad}upir.mm_deallocator({}) %{}",
                    print_deallocator(&d.deallocator),
                    d.symbol
                );
            }
            NodeKind::Sync(s) => {
                let mut line = format!("{pad}upir.sync {}", s.name.keyword());
                match s.mode {
                    SyncMode::Sync => line.push_str(" sync"),
                    SyncMode::Async(step) => {
                        let _ = write!(line, " async {}", step.keyword());
                    }
                }
                let _ = write!(line, " primary({})", print_sync_unit(&s.primary));
                let _ = write!(line, " secondary({})", print_sync_unit(&s.secondary));
                if let Some(op) = s.operation {
                    let _ = write!(line, " operation({})", op.symbol());
                }
                if !s.data.is_empty() {
                    let syms = s.data.iter().map(|d| format!("%{d}")).collect::<Vec<_>>().join(", ");
                    let _ = write!(line, " data({syms})");
                }
                if s.implicit {
                    line.push_str(" implicit");
                }
                match &s.body {
                    Some(region) => {
                        let _ = writeln!(out, "{line} {{");
                        self.print_region(out, region, depth + 1)?;
                        let _ = writeln!(out, "{pad}}}");
                    }
                    None => {
                        let _ = writeln!(out, "{line}");
                    }
                }
            }
            NodeKind::Ext(e) => {
                let entries = e
                    .entries
                    .iter()
                    .map(|(k, v)| format!("{k} = {}", print_ext_value(v)))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(out, "{pad}upir.ext {{ {entries} }}");
            }
            NodeKind::If(i) => {
                let _ = writeln!(out, "{pad}upir.if condition({}) {{", pe(&i.cond));
                self.print_region(out, &i.then_region, depth + 1)?;
                match &i.else_region {
                    Some(e) => {
                        let _ = writeln!(out, "{pad}}} else {{");
                        self.print_region(out, e, depth + 1)?;
                        let _ = writeln!(out, "{pad}}}");
                    }
                    None => {
                        let _ = writeln!(out, "{pad}}}");
                    }
                }
            }
            NodeKind::BaseFor(f) => {
                let decl = if f.declares { "decl " } else { "" };
                let _ = writeln!(
                    out,
                    "{pad}upir.for {decl}%{} = {} cond({}) step({}) {{",
                    f.var,
                    pe(&f.init),
                    pe(&f.cond),
                    pe(&f.step)
                );
                self.print_region(out, &f.body, depth + 1)?;
                let _ = writeln!(out, "{pad}}}");
            }
            NodeKind::Decl { ty, name, init } => match init {
                Some(e) => {
                    let _ = writeln!(out, "{pad}upir.decl {ty} %{name} = {}", pe(e));
                }
                None => {
                    let _ = writeln!(out, "{pad}upir.decl {ty} %{name}");
                }
            },
            NodeKind::Assign { base, indices, value } => {
                let mut lhs = format!("%{base}");
                for i in indices {
                    let _ = write!(lhs, "[{}]", pe(i));
                }
                let _ = writeln!(out, "{pad}upir.assign {lhs} = {}", pe(value));
            }
            NodeKind::Call { callee, args } => {
                let a = args.iter().map(pe).collect::<Vec<_>>().join(", ");
                let _ = writeln!(out, "{pad}call @{callee}({a})");
            }
            NodeKind::Return(v) => match v {
                Some(e) => {
                    let _ = writeln!(out, "{pad}upir.return {}", pe(e));
                }
                None => {
                    let _ = writeln!(out, "{pad}upir.return");
                }
            },
        }
        Ok(())
    }

    fn write_data(&self, line: &mut String, items: &[DataItem]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        let rendered = items.iter().map(print_data_item).collect::<Vec<_>>().join(", ");
        let _ = write!(line, " data({rendered})");
        Ok(())
    }
}

/// UPIR expression form: fully parenthesized, `%c`/`%f` constants.
pub fn pe(e: &Expr) -> String {
    match e {
        Expr::IntLit(v) => format!("%c{v}"),
        Expr::FloatLit(v) => format!("%f{v:?}"),
        Expr::Ident(n) => format!("%{n}"),
        Expr::Index { base, indices } => {
            let mut s = format!("%{base}");
            for i in indices {
                let _ = write!(s, "[{}]", pe(i));
            }
            s
        }
        Expr::Binary { op, lhs, rhs } => format!("({} {} {})", pe(lhs), op_symbol(*op), pe(rhs)),
        Expr::Neg(inner) => format!("(-{})", pe(inner)),
        Expr::Intrinsic(i) => format!("{}()", i.name()),
    }
}

fn op_symbol(op: BinOp) -> &'static str {
    op.symbol()
}

fn print_lp(lp: &LoopParallel) -> String {
    match &lp.kind {
        LoopParKind::Worksharing { schedule, chunk, distribute } => {
            let sched = match chunk {
                Some(c) => format!("schedule({}, {})", schedule.keyword(), pe(c)),
                None => format!("schedule({})", schedule.keyword()),
            };
            format!("worksharing({sched} distribute({}))", distribute.keyword())
        }
        LoopParKind::Simd { simdlen } => format!("simd(simdlen({}))", pe(simdlen)),
        LoopParKind::Taskloop { grainsize, num_tasks } => {
            let mut fields = Vec::new();
            if let Some(g) = grainsize {
                fields.push(format!("grainsize({})", pe(g)));
            }
            if let Some(n) = num_tasks {
                fields.push(format!("num_tasks({})", pe(n)));
            }
            format!("taskloop({})", fields.join(" "))
        }
    }
}

fn print_sync_unit(u: &SyncUnit) -> String {
    let id = match &u.unit {
        SyncUnitId::All => "*".to_string(),
        SyncUnitId::Id(e) => match e.as_int_const() {
            Some(v) => v.to_string(),
            None => pe(e),
        },
    };
    format!("{}:{id}", u.kind.keyword())
}

fn print_memcpy(m: &MemcpyAttr) -> String {
    match m {
        MemcpyAttr::Default => "default_memcpy".into(),
        MemcpyAttr::Custom(s) => format!("%{s}"),
    }
}

fn print_allocator(a: &AllocatorAttr) -> String {
    match a {
        AllocatorAttr::Default => "default_mem_alloc".into(),
        AllocatorAttr::LargeCap => "large_cap_mem_alloc".into(),
        AllocatorAttr::Custom(s) => format!("%{s}"),
    }
}

fn print_deallocator(d: &DeallocatorAttr) -> String {
    match d {
        DeallocatorAttr::Default => "default_mem_dealloc".into(),
        DeallocatorAttr::LargeCap => "large_cap_mem_dealloc".into(),
        DeallocatorAttr::Custom(s) => format!("%{s}"),
    }
}

fn print_ext_value(v: &ExtValue) -> String {
    match v {
        ExtValue::Str(s) => format!("{s:?}"),
        ExtValue::Expr(e) => pe(e),
        ExtValue::Symbols(syms) => {
            format!("[{}]", syms.iter().map(|s| format!("%{s}")).collect::<Vec<_>>().join(", "))
        }
    }
}

fn print_section(s: &ArraySection) -> String {
    let length = match &s.length {
        Some(l) => pe(l),
        None => "*".into(),
    };
    let stride = match &s.stride {
        Some(st) => pe(st),
        None => pe(&Expr::IntLit(1)),
    };
    format!("[{} : {length} : {stride}]", pe(&s.lower))
}

fn write_depend(line: &mut String, depend: &[(DependMode, VarRef)]) {
    for mode in [DependMode::In, DependMode::Out, DependMode::InOut] {
        let vars: Vec<String> = depend
            .iter()
            .filter(|(m, _)| *m == mode)
            .map(|(_, v)| {
                let mut t = format!("%{}", v.name);
                for s in &v.sections {
                    t.push_str(&print_section(s));
                }
                t
            })
            .collect();
        if !vars.is_empty() {
            let _ = write!(line, " depend({}: {})", mode.keyword(), vars.join(", "));
        }
    }
}

/// The seven-position data item record of the data-attribute grammar.
fn print_data_item(item: &DataItem) -> String {
    let sharing = match item.sharing.known() {
        Some(s) => format!("{}({})", s.property.keyword(), s.visibility.keyword()),
        None => "unknown".into(),
    };
    let mapping = match item.mapping.known() {
        Some(m) => match &m.mapper {
            Some(mapper) => format!("{}({}, %{mapper})", m.property.keyword(), m.visibility.keyword()),
            None => format!("{}({})", m.property.keyword(), m.visibility.keyword()),
        },
        None => "unknown".into(),
    };
    let access = match item.access.known() {
        Some(a) => a.keyword().to_string(),
        None => "unknown".into(),
    };
    let dist = match item.distribution.known() {
        Some(d) => {
            let mut parts = Vec::new();
            if let Some(u) = &d.unit_id {
                parts.push(format!("unit-id({})", pe(u)));
            }
            parts.push(format!("pattern({})", d.pattern.keyword()));
            if !d.section.is_empty() {
                let secs: String = d.section.iter().map(print_section).collect();
                parts.push(format!("section({secs})"));
            }
            parts.join(", ")
        }
        None => "unknown".into(),
    };
    let allocator = match item.allocator.known() {
        Some(a) => format!("allocator({})", print_allocator(a)),
        None => "unknown".into(),
    };
    let deallocator = match item.deallocator.known() {
        Some(d) => format!("deallocator({})", print_deallocator(d)),
        None => "unknown".into(),
    };
    let memcpy = match item.memcpy.known() {
        Some(m) => format!("memcpy({})", print_memcpy(m)),
        None => "unknown".into(),
    };
    format!("%{}({sharing}, {mapping}, {access}, {dist}, {allocator}, {deallocator}, {memcpy})", item.symbol)
}
