//! Canonicalization (pre-order id renumbering) and structural validation.

use crate::ast::{ArraySection, Expr};
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::{HashMap, HashSet};

/// Renumber node ids in module pre-order and rewrite every cross reference.
/// Printing emits references positionally, so a canonicalized module is the
/// fixpoint of print-then-parse.
pub fn canonicalize(module: &Module) -> Module {
    let mut m = module.clone();
    let mut map: HashMap<NodeId, NodeId> = HashMap::new();
    let mut counter = 0u32;
    m.walk(&mut |n| {
        map.entry(n.id).or_insert(NodeId(counter));
        counter += 1;
    });
    let remap = |id: &mut NodeId| {
        if let Some(new) = map.get(id) {
            *id = *new;
        }
    };
    let remap_opt = |id: &mut Option<NodeId>| {
        if let Some(i) = id {
            if let Some(new) = map.get(i) {
                *i = *new;
            }
        }
    };
    let mut counter = 0u32;
    m.walk_mut(&mut |n| {
        n.id = NodeId(counter);
        counter += 1;
        match &mut n.kind {
            NodeKind::Spmd(s) => {
                remap_opt(&mut s.nested_parent);
                remap_opt(&mut s.nested_child);
                s.branch.iter_mut().for_each(remap);
                s.sync.iter_mut().for_each(remap);
                normalize_items(&mut s.data);
            }
            NodeKind::Loop(l) => {
                l.sync.iter_mut().for_each(remap);
                normalize_items(&mut l.data);
            }
            NodeKind::Task(t) => {
                t.sync.iter_mut().for_each(remap);
                normalize_items(&mut t.data);
                normalize_depend(&mut t.depend);
            }
            NodeKind::DataRegion(d) => normalize_items(&mut d.data),
            NodeKind::DataMovement(m) => normalize_depend(&mut m.depend),
            NodeKind::DataUpdate(u) => normalize_depend(&mut u.depend),
            _ => {}
        }
    });
    m
}

fn normalize_items(items: &mut [DataItem]) {
    for item in items {
        if let FieldState::Known(d) = &mut item.distribution {
            for s in &mut d.section {
                normalize_section(s);
            }
        }
    }
}

fn normalize_depend(depend: &mut [(crate::ast::DependMode, crate::ast::VarRef)]) {
    for (_, v) in depend {
        for s in &mut v.sections {
            normalize_section(s);
        }
    }
}

fn normalize_section(s: &mut ArraySection) {
    if s.stride.is_none() {
        s.stride = Some(Expr::IntLit(1));
    }
}

/// Structural validation: id uniqueness, reference resolution, nesting rules,
/// sync pairing, and the data-mapping context rule.
pub fn validate(module: &Module) -> Result<()> {
    let mut ids = HashSet::new();
    let mut dup = None;
    module.walk(&mut |n| {
        if !ids.insert(n.id) && dup.is_none() {
            dup = Some(n.id);
        }
    });
    if let Some(id) = dup {
        return Err(err(format!("duplicate node id {id}")));
    }

    let mut kinds: HashMap<NodeId, &'static str> = HashMap::new();
    module.walk(&mut |n| {
        let k = match &n.kind {
            NodeKind::Sync(_) => "sync",
            NodeKind::Spmd(_) => "spmd",
            NodeKind::If(_) => "if",
            _ => "other",
        };
        kinds.insert(n.id, k);
    });
    let resolve = |id: NodeId, expect: &str, what: &str| -> Result<()> {
        match kinds.get(&id) {
            None => Err(err(format!("dangling node reference {id} in {what}"))),
            Some(k) if expect != "any" && *k != expect => {
                Err(err(format!("{what} reference {id} must name a {expect} node")))
            }
            _ => Ok(()),
        }
    };

    let mut check: Result<()> = Ok(());
    module.walk(&mut |n| {
        if check.is_err() {
            return;
        }
        check = (|| -> Result<()> {
            match &n.kind {
                NodeKind::Spmd(s) => {
                    for id in &s.sync {
                        resolve(*id, "sync", "spmd sync list")?;
                    }
                    for id in &s.branch {
                        resolve(*id, "if", "spmd branch list")?;
                    }
                    if let Some(p) = s.nested_parent {
                        resolve(p, "spmd", "nested-parent")?;
                    }
                    if let Some(c) = s.nested_child {
                        resolve(c, "spmd", "nested-child")?;
                    }
                }
                NodeKind::Loop(l) => {
                    for id in &l.sync {
                        resolve(*id, "sync", "loop sync list")?;
                    }
                    if l.collapse < 1 {
                        return Err(err("collapse must be >= 1"));
                    }
                    match l.step.as_int_const() {
                        Some(s) if s > 0 => {}
                        _ => return Err(err("normalized loop step must be a positive integer constant")),
                    }
                    if let Some(lp) = &l.parallel {
                        if let LoopParKind::Taskloop { grainsize: Some(_), num_tasks: Some(_) } = lp.kind {
                            return Err(err("taskloop cannot set both grainsize and num_tasks"));
                        }
                    }
                }
                NodeKind::Task(t) => {
                    for id in &t.sync {
                        resolve(*id, "sync", "task sync list")?;
                    }
                    let needs_device = matches!(t.kind, TaskKind::Offload | TaskKind::Remote);
                    if needs_device != t.device.is_some() {
                        return Err(err("task device must be present exactly for offload/remote tasks"));
                    }
                }
                NodeKind::Sync(s) => {
                    if s.name.requires_operation() && s.operation.is_none() {
                        return Err(err(format!("sync `{}` requires an operation", s.name.keyword())));
                    }
                    if s.name.forbids_operation() && s.operation.is_some() {
                        return Err(err(format!("sync `{}` does not take an operation", s.name.keyword())));
                    }
                }
                _ => {}
            }
            Ok(())
        })();
    });
    check?;

    for f in &module.functions {
        check_region_rules(&f.body, &mut Context::default())?;
        check_async_pairs(&f.body)?;
    }

    check_branch_targets(module)?;
    check_nesting_levels(module)?;
    Ok(())
}

#[derive(Default, Clone)]
struct Context {
    in_spmd: bool,
    mapping_ok: bool,
}

fn check_region_rules(region: &Region, ctx: &mut Context) -> Result<()> {
    for node in &region.nodes {
        let mut inner = ctx.clone();
        match &node.kind {
            NodeKind::Spmd(s) => {
                inner.in_spmd = true;
                check_items(&s.data, ctx.mapping_ok, "spmd")?;
            }
            NodeKind::Task(t) => {
                let offload = matches!(t.kind, TaskKind::Offload | TaskKind::Remote);
                check_items(&t.data, offload || ctx.mapping_ok, "task")?;
                inner.mapping_ok = offload || ctx.mapping_ok;
            }
            NodeKind::DataRegion(d) => {
                check_items(&d.data, true, "data region")?;
                inner.mapping_ok = true;
            }
            NodeKind::Loop(l) => {
                check_items(&l.data, ctx.mapping_ok, "loop")?;
                if let Some(LoopParallel { kind: LoopParKind::Worksharing { .. } }) = &l.parallel {
                    if !ctx.in_spmd {
                        return Err(err("worksharing loop-parallel must be within an SPMD region"));
                    }
                }
                if l.collapse > perfect_nest_depth(l) {
                    return Err(err(format!(
                        "collapse({}) exceeds perfectly nested canonical depth {}",
                        l.collapse,
                        perfect_nest_depth(l)
                    )));
                }
            }
            _ => {}
        }
        for r in node.regions() {
            check_region_rules(r, &mut inner.clone())?;
        }
    }
    Ok(())
}

pub(crate) fn perfect_nest_depth(l: &LoopNode) -> i64 {
    match l.body.nodes.as_slice() {
        [Node { kind: NodeKind::Loop(inner), .. }] => 1 + perfect_nest_depth(inner),
        _ => 1,
    }
}

fn check_items(items: &[DataItem], mapping_ok: bool, what: &str) -> Result<()> {
    for item in items {
        if let FieldState::Known(m) = &item.mapping {
            if m.property != MappingProp::None && !mapping_ok {
                return Err(err(format!(
                    "`{}` has mapping `{}` outside any offload/remote task or data region ({what})",
                    item.symbol,
                    m.property.keyword()
                )));
            }
        }
    }
    Ok(())
}

/// Async sync nodes must come in matched arrive/wait pairs within one region,
/// arrive strictly first, same shape.
fn check_async_pairs(region: &Region) -> Result<()> {
    let mut open: Vec<&SyncNode> = Vec::new();
    for node in &region.nodes {
        if let NodeKind::Sync(s) = &node.kind {
            match s.mode {
                SyncMode::Async(SyncStep::ArriveCompute) => open.push(s),
                SyncMode::Async(SyncStep::WaitRelease) => {
                    let found = open.iter().position(|a| {
                        a.name == s.name
                            && a.primary == s.primary
                            && a.secondary == s.secondary
                            && a.data == s.data
                            && a.operation == s.operation
                    });
                    match found {
                        Some(i) => {
                            open.remove(i);
                        }
                        None => {
                            return Err(err(format!(
                                "async wait-release `{}` has no matching arrive-compute",
                                s.name.keyword()
                            )))
                        }
                    }
                }
                SyncMode::Sync => {}
            }
        }
        for r in node.regions() {
            check_async_pairs(r)?;
        }
    }
    if let Some(s) = open.first() {
        return Err(err(format!(
            "async arrive-compute `{}` has no matching wait-release in its region",
            s.name.keyword()
        )));
    }
    Ok(())
}

/// Branch entries must name if-nodes lexically inside the spmd body, or
/// inside a function the body calls (the CUDA launch shape).
fn check_branch_targets(module: &Module) -> Result<()> {
    let mut result = Ok(());
    module.walk(&mut |n| {
        if result.is_err() {
            return;
        }
        if let NodeKind::Spmd(s) = &n.kind {
            for id in &s.branch {
                let mut found = region_contains(&s.body, *id);
                if !found {
                    for callee in reachable_callees(module, &s.body) {
                        if let Some(f) = module.function(&callee) {
                            found = found || region_contains(&f.body, *id);
                        }
                    }
                }
                if !found {
                    result = Err(err(format!("branch entry {id} is not inside the spmd region or its callees")));
                }
            }
        }
    });
    result
}

fn region_contains(region: &Region, id: NodeId) -> bool {
    region.nodes.iter().any(|n| n.id == id || n.regions().iter().any(|r| region_contains(r, id)))
}

pub(crate) fn reachable_callees(module: &Module, region: &Region) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut queue: Vec<String> = Vec::new();
    fn collect(region: &Region, out: &mut Vec<String>) {
        for n in &region.nodes {
            if let NodeKind::Call { callee, .. } = &n.kind {
                out.push(callee.clone());
            }
            for r in n.regions() {
                collect(r, out);
            }
        }
    }
    collect(region, &mut queue);
    let mut out = Vec::new();
    while let Some(name) = queue.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        if let Some(f) = module.function(&name) {
            collect(&f.body, &mut queue);
        }
        out.push(name);
    }
    out
}

/// When nesting levels are annotated, the innermost spmd of a chain is level
/// 0 and each enclosing spmd is exactly one greater.
fn check_nesting_levels(module: &Module) -> Result<()> {
    fn deepest_chain(region: &Region) -> i64 {
        let mut max = 0;
        for n in &region.nodes {
            let local = match &n.kind {
                NodeKind::Spmd(s) => 1 + deepest_chain(&s.body),
                _ => n.regions().iter().map(|r| deepest_chain(r)).max().unwrap_or(0),
            };
            max = max.max(local);
        }
        max
    }
    fn go(region: &Region) -> Result<()> {
        for n in &region.nodes {
            if let NodeKind::Spmd(s) = &n.kind {
                if let Some(level) = s.nested_level {
                    let expect = deepest_chain(&s.body);
                    if level != expect {
                        return Err(err(format!(
                            "spmd nested-level is {level} but {expect} spmd level(s) nest below it"
                        )));
                    }
                }
            }
            for r in n.regions() {
                go(r)?;
            }
        }
        Ok(())
    }
    for f in &module.functions {
        go(&f.body)?;
    }
    Ok(())
}

fn err(msg: impl Into<String>) -> Diag {
    Diag::new(Pos::default(), msg)
}
