//! Data-attribute completion and access-mode inference.
//!
//! Default rules when the program specifies nothing:
//!   offload/remote task: arrays map tofrom, scalars are firstprivate;
//!   plain task: scalars firstprivate, arrays shared;
//!   spmd/loop: outer-scope variables shared, loop induction variables
//!   private; distribution defaults to block with no section; allocator,
//!   deallocator, and memcpy take their default attributes.

use crate::ast::Expr;
use crate::diag::Result;
use crate::ir::*;
use std::collections::{HashMap, HashSet};

/// Every symbol referenced inside an spmd/task/loop body gets exactly one
/// fully populated DataItem on that node; inferred fields get implicit
/// visibility, user clauses stay explicit.
pub fn infer_data_attributes(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    let ranks = symbol_ranks(&m);
    for fi in 0..m.functions.len() {
        let fname = m.functions[fi].name.clone();
        let rank = ranks.get(&fname).cloned().unwrap_or_default();
        let mut body = std::mem::take(&mut m.functions[fi].body);
        infer_region(&mut body, &rank);
        m.functions[fi].body = body;
    }
    Ok(m)
}

/// Per-function symbol ranks (0 = scalar); params, decls, loop variables and
/// allocations all introduce symbols.
fn symbol_ranks(module: &Module) -> HashMap<String, HashMap<String, u8>> {
    let mut out = HashMap::new();
    for f in &module.functions {
        let mut rank: HashMap<String, u8> = HashMap::new();
        for p in &f.params {
            rank.insert(p.name.clone(), p.ty.rank);
        }
        fn go(region: &Region, rank: &mut HashMap<String, u8>) {
            for n in &region.nodes {
                match &n.kind {
                    NodeKind::Decl { name, .. } => {
                        rank.insert(name.clone(), 0);
                    }
                    NodeKind::Loop(l) => {
                        rank.insert(l.induction.clone(), 0);
                    }
                    NodeKind::BaseFor(b) => {
                        rank.insert(b.var.clone(), 0);
                    }
                    NodeKind::MmAlloc(a) => {
                        rank.insert(a.symbol.clone(), 1);
                    }
                    _ => {}
                }
                for r in n.regions() {
                    go(r, rank);
                }
            }
        }
        go(&f.body, &mut rank);
        out.insert(f.name.clone(), rank);
    }
    out
}

fn infer_region(region: &mut Region, rank: &HashMap<String, u8>) {
    for node in &mut region.nodes {
        match &mut node.kind {
            NodeKind::Task(t) => {
                let free = free_symbols(&t.body, &[]);
                let offload = matches!(t.kind, TaskKind::Offload | TaskKind::Remote);
                complete_task_items(&mut t.data, &free, rank, offload);
            }
            NodeKind::Spmd(s) => {
                let free = free_symbols(&s.body, &[]);
                complete_shared_items(&mut s.data, &free, None);
            }
            NodeKind::Loop(l) => {
                let free = free_symbols(&l.body, &[&l.induction]);
                complete_shared_items(&mut l.data, &free, Some(l.induction.clone()));
            }
            NodeKind::DataRegion(d) => {
                for item in &mut d.data {
                    if item.sharing.is_unknown() {
                        item.sharing = FieldState::Known(Sharing {
                            property: SharingProp::Shared,
                            visibility: Visibility::Implicit,
                        });
                    }
                    fill_common_defaults(item);
                }
            }
            _ => {}
        }
        for r in node.regions_mut() {
            infer_region(r, rank);
        }
    }
}

/// Symbols referenced inside `region` (including nested node fields) that are
/// not declared within it, in first-reference order.
pub(crate) fn free_symbols(region: &Region, bound: &[&str]) -> Vec<String> {
    let mut declared: HashSet<String> = bound.iter().map(|s| s.to_string()).collect();
    let mut order = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    collect(region, &mut declared, &mut order, &mut seen);
    return order;

    fn note(sym: &str, declared: &HashSet<String>, order: &mut Vec<String>, seen: &mut HashSet<String>) {
        if !declared.contains(sym) && seen.insert(sym.to_string()) {
            order.push(sym.to_string());
        }
    }

    fn exprs(e: &Expr, declared: &HashSet<String>, order: &mut Vec<String>, seen: &mut HashSet<String>) {
        let mut syms = Vec::new();
        e.referenced_symbols(&mut syms);
        for s in syms {
            note(&s, declared, order, seen);
        }
    }

    fn collect(
        region: &Region,
        declared: &mut HashSet<String>,
        order: &mut Vec<String>,
        seen: &mut HashSet<String>,
    ) {
        for n in &region.nodes {
            match &n.kind {
                NodeKind::Spmd(s) => {
                    for e in [&s.num_teams, &s.num_units].into_iter().flatten() {
                        exprs(e, declared, order, seen);
                    }
                    for item in &s.data {
                        note(&item.symbol, declared, order, seen);
                    }
                }
                NodeKind::Loop(l) => {
                    // The induction variable is bound by the loop for its
                    // whole subtree, but its bound expressions evaluate here.
                    for e in [&l.lower, &l.upper, &l.step] {
                        exprs(e, declared, order, seen);
                    }
                    declared.insert(l.induction.clone());
                    for item in &l.data {
                        note(&item.symbol, declared, order, seen);
                    }
                }
                NodeKind::Task(t) => {
                    for (_, v) in &t.depend {
                        note(&v.name, declared, order, seen);
                    }
                    for item in &t.data {
                        note(&item.symbol, declared, order, seen);
                    }
                }
                NodeKind::DataRegion(d) => {
                    for item in &d.data {
                        note(&item.symbol, declared, order, seen);
                    }
                }
                NodeKind::DataMovement(mv) => {
                    note(&mv.dest, declared, order, seen);
                    note(&mv.src, declared, order, seen);
                    exprs(&mv.size, declared, order, seen);
                }
                NodeKind::DataUpdate(u) => {
                    for s in &u.data {
                        note(s, declared, order, seen);
                    }
                }
                NodeKind::MmAlloc(a) => {
                    exprs(&a.size, declared, order, seen);
                    declared.insert(a.symbol.clone());
                }
                NodeKind::MmDealloc(dl) => note(&dl.symbol, declared, order, seen),
                NodeKind::Sync(s) => {
                    for d in &s.data {
                        note(d, declared, order, seen);
                    }
                }
                NodeKind::Ext(_) => {}
                NodeKind::If(i) => exprs(&i.cond, declared, order, seen),
                NodeKind::BaseFor(b) => {
                    exprs(&b.init, declared, order, seen);
                    declared.insert(b.var.clone());
                    exprs(&b.cond, declared, order, seen);
                    exprs(&b.step, declared, order, seen);
                }
                NodeKind::Decl { name, init, .. } => {
                    if let Some(e) = init {
                        exprs(e, declared, order, seen);
                    }
                    declared.insert(name.clone());
                }
                NodeKind::Assign { base, indices, value } => {
                    note(base, declared, order, seen);
                    for e in indices {
                        exprs(e, declared, order, seen);
                    }
                    exprs(value, declared, order, seen);
                }
                NodeKind::Call { args, .. } => {
                    for e in args {
                        exprs(e, declared, order, seen);
                    }
                }
                NodeKind::Return(v) => {
                    if let Some(e) = v {
                        exprs(e, declared, order, seen);
                    }
                }
            }
            for r in n.regions() {
                collect(r, declared, order, seen);
            }
        }
    }
}

fn item_for<'v>(items: &'v mut Vec<DataItem>, sym: &str) -> &'v mut DataItem {
    if let Some(i) = items.iter().position(|it| it.symbol == sym) {
        return &mut items[i];
    }
    items.push(DataItem::unknown(sym));
    items.last_mut().unwrap()
}

fn complete_task_items(
    items: &mut Vec<DataItem>,
    free: &[String],
    rank: &HashMap<String, u8>,
    offload: bool,
) {
    for sym in free {
        item_for(items, sym);
    }
    for item in items.iter_mut() {
        let is_array = rank.get(&item.symbol).copied().unwrap_or(0) > 0;
        if item.sharing.is_unknown() {
            let property = if is_array { SharingProp::Shared } else { SharingProp::Firstprivate };
            item.sharing = FieldState::Known(Sharing { property, visibility: Visibility::Implicit });
        }
        if item.mapping.is_unknown() {
            let property = if offload && is_array { MappingProp::ToFrom } else { MappingProp::None };
            item.mapping =
                FieldState::Known(Mapping { property, visibility: Visibility::Implicit, mapper: None });
        }
        fill_common_defaults(item);
    }
}

fn complete_shared_items(items: &mut Vec<DataItem>, free: &[String], induction: Option<String>) {
    if let Some(var) = &induction {
        let item = item_for(items, var);
        if item.sharing.is_unknown() {
            item.sharing = FieldState::Known(Sharing {
                property: SharingProp::Private,
                visibility: Visibility::Implicit,
            });
        }
    }
    for sym in free {
        item_for(items, sym);
    }
    for item in items.iter_mut() {
        if item.sharing.is_unknown() {
            item.sharing =
                FieldState::Known(Sharing { property: SharingProp::Shared, visibility: Visibility::Implicit });
        }
        if item.mapping.is_unknown() {
            item.mapping = FieldState::Known(Mapping {
                property: MappingProp::None,
                visibility: Visibility::Implicit,
                mapper: None,
            });
        }
        fill_common_defaults(item);
    }
    // Induction item goes first for readability of the printed form.
    if let Some(var) = induction {
        if let Some(i) = items.iter().position(|it| it.symbol == var) {
            let item = items.remove(i);
            items.insert(0, item);
        }
    }
}

fn fill_common_defaults(item: &mut DataItem) {
    if item.mapping.is_unknown() {
        item.mapping = FieldState::Known(Mapping {
            property: MappingProp::None,
            visibility: Visibility::Implicit,
            mapper: None,
        });
    }
    if item.distribution.is_unknown() {
        item.distribution = FieldState::Known(Distribution {
            unit_id: None,
            pattern: DistributionPattern::Block,
            section: Vec::new(),
        });
    }
    if item.allocator.is_unknown() {
        item.allocator = FieldState::Known(AllocatorAttr::Default);
    }
    if item.deallocator.is_unknown() {
        item.deallocator = FieldState::Known(DeallocatorAttr::Default);
    }
    if item.memcpy.is_unknown() {
        item.memcpy = FieldState::Known(MemcpyAttr::Default);
    }
}

// ---------------------------------------------------------------------------
// Access modes
// ---------------------------------------------------------------------------

#[derive(Default, Clone, Copy)]
struct UseDef {
    read: bool,
    written: bool,
}

/// Use/def walk per region: read-only, write-only, or read-write. Unknown
/// effects (call arguments) are conservatively read-write.
pub fn infer_access_modes(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    fn go(region: &mut Region) {
        for node in &mut region.nodes {
            let (items, body): (Option<&mut Vec<DataItem>>, Option<&Region>) = match &mut node.kind {
                NodeKind::Spmd(s) => (Some(&mut s.data), Some(&s.body)),
                NodeKind::Loop(l) => (Some(&mut l.data), Some(&l.body)),
                NodeKind::Task(t) => (Some(&mut t.data), Some(&t.body)),
                NodeKind::DataRegion(d) => (Some(&mut d.data), Some(&d.body)),
                _ => (None, None),
            };
            if let (Some(items), Some(body)) = (items, body) {
                let mut uses: HashMap<String, UseDef> = HashMap::new();
                collect_region(body, &mut uses);
                for item in items.iter_mut() {
                    if !item.access.is_unknown() {
                        continue;
                    }
                    let ud = uses.get(&item.symbol).copied().unwrap_or_default();
                    let access = match (ud.read, ud.written) {
                        (true, false) => Access::ReadOnly,
                        (false, true) => Access::WriteOnly,
                        (true, true) => Access::ReadWrite,
                        // Never touched in the body: configuration-only use.
                        (false, false) => Access::ReadOnly,
                    };
                    item.access = FieldState::Known(access);
                }
            }
            for r in node.regions_mut() {
                go(r);
            }
        }
    }
    for f in &mut m.functions {
        go(&mut f.body);
    }
    Ok(m)
}

fn read_expr(e: &Expr, uses: &mut HashMap<String, UseDef>) {
    let mut syms = Vec::new();
    e.referenced_symbols(&mut syms);
    for s in syms {
        uses.entry(s).or_default().read = true;
    }
}

fn collect_region(region: &Region, uses: &mut HashMap<String, UseDef>) {
    for n in &region.nodes {
        match &n.kind {
            NodeKind::Assign { base, indices, value } => {
                uses.entry(base.clone()).or_default().written = true;
                for e in indices {
                    read_expr(e, uses);
                }
                read_expr(value, uses);
            }
            NodeKind::Decl { name, init, .. } => {
                if let Some(e) = init {
                    read_expr(e, uses);
                }
                uses.entry(name.clone()).or_default().written = true;
            }
            NodeKind::Call { args, .. } => {
                // No interprocedural analysis; arguments may alias anything.
                for e in args {
                    let mut syms = Vec::new();
                    e.referenced_symbols(&mut syms);
                    for s in syms {
                        let u = uses.entry(s).or_default();
                        u.read = true;
                        u.written = true;
                    }
                }
            }
            NodeKind::If(i) => read_expr(&i.cond, uses),
            NodeKind::BaseFor(b) => {
                read_expr(&b.init, uses);
                read_expr(&b.cond, uses);
                read_expr(&b.step, uses);
                uses.entry(b.var.clone()).or_default().written = true;
            }
            NodeKind::Loop(l) => {
                for e in [&l.lower, &l.upper, &l.step] {
                    read_expr(e, uses);
                }
            }
            NodeKind::Spmd(s) => {
                for e in [&s.num_teams, &s.num_units].into_iter().flatten() {
                    read_expr(e, uses);
                }
            }
            NodeKind::Sync(s) => {
                for d in &s.data {
                    let u = uses.entry(d.clone()).or_default();
                    u.read = true;
                    u.written = true;
                }
            }
            NodeKind::DataMovement(mv) => {
                uses.entry(mv.dest.clone()).or_default().written = true;
                uses.entry(mv.src.clone()).or_default().read = true;
                read_expr(&mv.size, uses);
            }
            NodeKind::DataUpdate(u) => {
                for s in &u.data {
                    let e = uses.entry(s.clone()).or_default();
                    e.read = true;
                    e.written = true;
                }
            }
            NodeKind::MmAlloc(a) => {
                uses.entry(a.symbol.clone()).or_default().written = true;
                read_expr(&a.size, uses);
            }
            NodeKind::Return(Some(e)) => read_expr(e, uses),
            _ => {}
        }
        for r in n.regions() {
            collect_region(r, uses);
        }
    }
}
