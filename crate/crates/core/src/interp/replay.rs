//! Replay of the lowered runtime form.
//!
//! A second execution path driven by the primitive sequence rather than the
//! IR tree: fork primitives spin up unit scopes, dispatch primitives pull
//! chunks, reduce primitives combine partials in ascending unit order. Used
//! to check that lowering preserves observable behavior.

use super::machine::{ECtx, Machine, Scope};
use super::serial::{reduce_combine, reduction_identity};
use super::{rt_err, Options, Outcome, RtResult, Value};
use crate::ir::{Device, MappingProp, Module, TaskKind};
use crate::passes::lower::{CaptureMode, LoweredSchedule, OutlinedFn, Prim, RtItem, RuntimeForm};
use crate::passes::schedule::{static_chunks, trip_count, DynDispatcher};
use std::collections::BTreeMap;

pub fn replay(
    module: &Module,
    rf: &RuntimeForm,
    entry: &str,
    inputs: &BTreeMap<String, Value>,
    opts: &Options,
) -> RtResult<Outcome> {
    let Some(f) = rf.function(entry) else {
        return rt_err(format!("entry function `{entry}` not found in runtime form"));
    };
    let mut m = Machine::new(opts.clone());
    let mut scope = Scope::new();
    for p in &f.params {
        let Some(v) = inputs.get(&p.name) else {
            return rt_err(format!("missing input binding for parameter `{}`", p.name));
        };
        let slot = m.alloc_slot(v.clone());
        scope.insert(p.name.clone(), slot);
        m.spaces.insert(("host".into(), p.name.clone()), slot);
    }
    let mut r = Replayer { m, module, rf, queue: Vec::new() };
    let host = RCtx { team: 0, teams: 1, unit: 0, units: 1, space: "host".into() };
    r.exec_items(&f.items, &mut scope, &host)?;
    r.drain_queue()?;
    if let Some(open) = r.m.ledger.iter().find(|l| l.live) {
        return rt_err(format!(
            "allocation ledger not empty at exit: `{}` in {} never deallocated",
            open.symbol, open.space
        ));
    }
    let mut buffers = BTreeMap::new();
    for p in &f.params {
        buffers.insert(p.name.clone(), r.m.slots[scope[&p.name]].clone());
    }
    Ok(Outcome {
        buffers,
        trace: std::mem::take(&mut r.m.trace),
        schedule_log: std::mem::take(&mut r.m.sched),
        warnings: std::mem::take(&mut r.m.warnings),
    })
}

#[derive(Clone)]
struct RCtx {
    team: u32,
    teams: u32,
    unit: u32,
    units: u32,
    space: String,
}

impl RCtx {
    fn ectx(&self) -> ECtx {
        ECtx {
            team: self.team,
            unit: self.unit,
            units: self.units,
            space: self.space.clone(),
            in_unit_atomic: false,
        }
    }
}

struct QueuedLaunch {
    prim: Prim,
    scope: Scope,
    ctx: RCtx,
}

struct Replayer<'a> {
    m: Machine,
    module: &'a Module,
    rf: &'a RuntimeForm,
    queue: Vec<QueuedLaunch>,
}

impl<'a> Replayer<'a> {
    fn exec_items(&mut self, items: &[RtItem], scope: &mut Scope, ctx: &RCtx) -> RtResult<()> {
        for item in items {
            match item {
                RtItem::Stmt(node) => {
                    self.m.exec_node(self.module, node, scope, &ctx.ectx())?;
                }
                RtItem::Prim(p) => self.exec_prim(p, scope, ctx)?,
            }
        }
        Ok(())
    }

    fn count_of(&mut self, e: &Option<crate::ast::Expr>, scope: &Scope, ctx: &RCtx, teams: bool) -> RtResult<u32> {
        let over = if teams { self.m.opts.teams_override } else { self.m.opts.units_override };
        if let Some(v) = over {
            return Ok(v.max(1));
        }
        match e {
            Some(e) => Ok(self.m.int_of(e, scope, &ctx.ectx())?.max(1) as u32),
            None => Ok(if teams { 1 } else { self.m.opts.default_units }),
        }
    }

    fn exec_prim(&mut self, p: &Prim, scope: &mut Scope, ctx: &RCtx) -> RtResult<()> {
        match p {
            Prim::ForkTeams { count, func, .. } => {
                let teams = self.count_of(count, scope, ctx, true)?;
                let f = self.fetch(func)?;
                for team in 0..teams {
                    let mut tctx = ctx.clone();
                    tctx.team = team;
                    tctx.teams = teams;
                    let mut tscope = scope.clone();
                    self.exec_items(&f.items, &mut tscope, &tctx)?;
                }
                Ok(())
            }
            Prim::ForkUnits { count, func, env } => {
                let units = self.count_of(count, scope, ctx, false)?;
                let f = self.fetch(func)?;
                self.run_units(&f, env, units, scope, ctx)
            }
            Prim::LaunchTask { is_async, policy, .. } => {
                let run_now = match policy {
                    Some(crate::ast::TaskPolicy::WorkFirst) => true,
                    Some(crate::ast::TaskPolicy::HelpFirst) => false,
                    None => !is_async,
                };
                if run_now {
                    self.exec_launch(p, scope, ctx)
                } else {
                    self.queue.push(QueuedLaunch { prim: p.clone(), scope: scope.clone(), ctx: ctx.clone() });
                    Ok(())
                }
            }
            Prim::MapEnter { space, items } => {
                let sp = format!("{}:{}", space.0.keyword(), space.1);
                self.m.map_enter(items, &sp, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::MapExit { space, items } => {
                let sp = format!("{}:{}", space.0.keyword(), space.1);
                let owned: Vec<String> = items
                    .iter()
                    .filter(|i| self.m.spaces.contains_key(&(sp.clone(), i.symbol.clone())))
                    .map(|i| i.symbol.clone())
                    .collect();
                self.m.map_exit(items, &sp, owned, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::Alloc { symbol, size, allocator } => {
                let node = crate::ir::Node {
                    id: crate::ir::NodeId(u32::MAX),
                    kind: crate::ir::NodeKind::MmAlloc(crate::ir::MmAllocNode {
                        allocator: allocator.clone(),
                        symbol: symbol.clone(),
                        size: size.clone(),
                    }),
                };
                self.m.exec_node(self.module, &node, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::Dealloc { symbol, deallocator } => {
                let node = crate::ir::Node {
                    id: crate::ir::NodeId(u32::MAX),
                    kind: crate::ir::NodeKind::MmDealloc(crate::ir::MmDeallocNode {
                        deallocator: deallocator.clone(),
                        symbol: symbol.clone(),
                    }),
                };
                self.m.exec_node(self.module, &node, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::Memcpy { dest_space, dest, src_space, src, size, direction } => {
                let node = crate::ir::Node {
                    id: crate::ir::NodeId(u32::MAX),
                    kind: crate::ir::NodeKind::DataMovement(crate::ir::DataMovementNode {
                        dest_space: dest_space.clone(),
                        dest: dest.clone(),
                        src_space: src_space.clone(),
                        src: src.clone(),
                        size: size.clone(),
                        direction: *direction,
                        memcpy: crate::ir::MemcpyAttr::Default,
                        depend: Vec::new(),
                    }),
                };
                self.m.exec_node(self.module, &node, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::Update { symbols, direction } => {
                let node = crate::ir::Node {
                    id: crate::ir::NodeId(u32::MAX),
                    kind: crate::ir::NodeKind::DataUpdate(crate::ir::DataUpdateNode {
                        data: symbols.clone(),
                        direction: *direction,
                        memcpy: crate::ir::MemcpyAttr::Default,
                        depend: Vec::new(),
                    }),
                };
                self.m.exec_node(self.module, &node, scope, &ctx.ectx())?;
                Ok(())
            }
            Prim::TaskWait => self.drain_queue(),
            Prim::Barrier { .. } | Prim::Reduce { .. } | Prim::DispatchLoop { .. } | Prim::Exclusive { .. } => {
                // Outside a fork there is one unit; collectives are trivial
                // and dispatch owns the whole space.
                let f = OutlinedFn {
                    name: "__host_seq".into(),
                    captures: Vec::new(),
                    items: vec![RtItem::Prim(p.clone())],
                };
                self.run_units(&f, &[], 1, scope, ctx)
            }
        }
    }

    fn fetch(&self, name: &str) -> RtResult<OutlinedFn> {
        self.rf
            .outlined_fn(name)
            .cloned()
            .ok_or_else(|| super::RtError(format!("unresolved outlined function @{name}")))
    }

    /// Lockstep execution of an outlined body over `units` unit scopes.
    fn run_units(
        &mut self,
        f: &OutlinedFn,
        env: &[(String, CaptureMode)],
        units: u32,
        caller: &mut Scope,
        ctx: &RCtx,
    ) -> RtResult<()> {
        // Reduction variables seed with the identity, not a copy.
        let mut reduce_set: Vec<(String, crate::ast::ReductionOp)> = Vec::new();
        collect_reduce_vars(&f.items, self.rf, &mut reduce_set);
        let mut scopes: Vec<Scope> = Vec::new();
        for _ in 0..units {
            let mut s = caller.clone();
            for (sym, mode) in env {
                if *mode == CaptureMode::ByValue {
                    if let Some(&slot) = caller.get(sym) {
                        let init = match reduce_set.iter().find(|(v, _)| v == sym) {
                            Some((_, op)) => reduction_identity(*op, &self.m.slots[slot]),
                            None => self.m.slots[slot].clone(),
                        };
                        let new = self.m.alloc_slot(init);
                        s.insert(sym.clone(), new);
                    }
                }
            }
            scopes.push(s);
        }
        for item in &f.items {
            match item {
                RtItem::Prim(Prim::Barrier { .. }) => {
                    // Lockstep already synchronizes; nothing reorders.
                }
                RtItem::Prim(Prim::Reduce { op, vars }) => {
                    for sym in vars {
                        let Some(&shared) = caller.get(sym) else {
                            return rt_err(format!("reduction variable `{sym}` unbound at reduce"));
                        };
                        let mut total = self.m.slots[shared].clone();
                        for s in &scopes {
                            let Some(&slot) = s.get(sym) else { continue };
                            if slot == shared {
                                continue;
                            }
                            let v = self.m.slots[slot].clone();
                            total = reduce_combine(*op, total, v)?;
                        }
                        self.m.slots[shared] = total;
                        for s in &mut scopes {
                            s.insert(sym.clone(), shared);
                        }
                    }
                }
                RtItem::Prim(Prim::DispatchLoop { desc, body_func, induction, lower, upper, step }) => {
                    self.dispatch(desc, body_func, induction, lower, upper, step, &mut scopes, ctx)?;
                }
                RtItem::Prim(Prim::Exclusive { name, func }) => {
                    let inner = self.fetch(func)?;
                    let run_all = !matches!(name, crate::ir::SyncName::Single);
                    for (u, s) in scopes.iter_mut().enumerate() {
                        if run_all || u == 0 {
                            let mut uctx = ctx.clone();
                            uctx.unit = u as u32;
                            uctx.units = units;
                            self.exec_items_scoped(&inner.items, s, &uctx)?;
                        }
                    }
                }
                other => {
                    for (u, s) in scopes.iter_mut().enumerate() {
                        let mut uctx = ctx.clone();
                        uctx.unit = u as u32;
                        uctx.units = units;
                        match other {
                            RtItem::Stmt(node) => {
                                self.m.exec_node(self.module, node, s, &uctx.ectx())?;
                            }
                            RtItem::Prim(p) => self.exec_prim(p, s, &uctx)?,
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn exec_items_scoped(&mut self, items: &[RtItem], scope: &mut Scope, ctx: &RCtx) -> RtResult<()> {
        self.exec_items(items, scope, ctx)
    }

    #[allow(clippy::too_many_arguments)]
    fn dispatch(
        &mut self,
        desc: &LoweredSchedule,
        body_func: &str,
        induction: &str,
        lower: &crate::ast::Expr,
        upper: &crate::ast::Expr,
        step: &crate::ast::Expr,
        scopes: &mut [Scope],
        ctx: &RCtx,
    ) -> RtResult<()> {
        let units = scopes.len() as u32;
        let probe = scopes[0].clone();
        let ectx = ctx.ectx();
        let lo = self.m.int_of(lower, &probe, &ectx)?;
        let hi = self.m.int_of(upper, &probe, &ectx)?;
        let st = self.m.int_of(step, &probe, &ectx)?;
        if st <= 0 {
            return rt_err("dispatch loop step must be positive");
        }
        let trip = trip_count(lo, hi, st);
        let body = self.fetch(body_func)?;
        let run_chunk = |r: &mut Self, unit: u32, scope: &mut Scope, (a, b): (i64, i64)| -> RtResult<()> {
            let slot = r.m.alloc_slot(Value::Int(0));
            let old = scope.insert(induction.to_string(), slot);
            for t in a..b {
                r.m.slots[slot] = Value::Int(lo + t * st);
                let mut uctx = ctx.clone();
                uctx.unit = unit;
                uctx.units = units;
                r.exec_items(&body.items, scope, &uctx)?;
            }
            match old {
                Some(s) => scope.insert(induction.to_string(), s),
                None => scope.remove(induction),
            };
            Ok(())
        };
        match desc {
            LoweredSchedule::Worksharing { policy, chunk, distribute } => {
                let chunk_size = match chunk {
                    Some(e) => Some(self.m.int_of(e, &probe, &ectx)?),
                    None => None,
                };
                let (team_lo, team_hi) = match distribute {
                    crate::ir::DistributeTarget::Units => (0, trip),
                    _ => {
                        let tc = static_chunks(trip, ctx.teams, None, ctx.team);
                        match tc.as_slice() {
                            [] => (0, 0),
                            cs => (cs[0].0, cs[cs.len() - 1].1),
                        }
                    }
                };
                match (distribute, policy) {
                    (crate::ir::DistributeTarget::Teams, _) => {
                        run_chunk(self, 0, &mut scopes[0], (team_lo, team_hi))?;
                    }
                    (_, crate::ast::SchedulePolicy::Dynamic | crate::ast::SchedulePolicy::Guided) => {
                        let mut d = DynDispatcher::new(*policy, team_lo, team_hi, units, chunk_size);
                        let mut u = 0u32;
                        while let Some(c) = d.next_chunk() {
                            run_chunk(self, u, &mut scopes[u as usize], c)?;
                            u = (u + 1) % units;
                        }
                    }
                    _ => {
                        for u in 0..units {
                            for c in static_chunks(team_hi - team_lo, units, chunk_size, u) {
                                run_chunk(self, u, &mut scopes[u as usize], (c.0 + team_lo, c.1 + team_lo))?;
                            }
                        }
                    }
                }
            }
            LoweredSchedule::Taskloop { grainsize, num_tasks } => {
                let grain = match (grainsize, num_tasks) {
                    (_, Some(n)) => {
                        let n = self.m.int_of(n, &probe, &ectx)?.max(1);
                        (trip + n - 1) / n
                    }
                    (Some(g), None) => self.m.int_of(g, &probe, &ectx)?.max(1),
                    (None, None) => 1,
                }
                .max(1);
                let mut a = 0;
                while a < trip {
                    let b = (a + grain).min(trip);
                    run_chunk(self, 0, &mut scopes[0], (a, b))?;
                    a = b;
                }
            }
        }
        Ok(())
    }

    fn exec_launch(&mut self, p: &Prim, scope: &mut Scope, ctx: &RCtx) -> RtResult<()> {
        let Prim::LaunchTask { kind, device, func, env, map, .. } = p else { unreachable!() };
        let f = self.fetch(func)?;
        match kind {
            TaskKind::Plain => {
                let mut inner = scope.clone();
                for (sym, mode) in env {
                    if *mode == CaptureMode::ByValue {
                        if let Some(&slot) = scope.get(sym) {
                            let v = self.m.slots[slot].clone();
                            let new = self.m.alloc_slot(v);
                            inner.insert(sym.clone(), new);
                        }
                    }
                }
                self.exec_items(&f.items, &mut inner, ctx)
            }
            TaskKind::Offload | TaskKind::Remote => {
                let (dev, id) = device.unwrap_or((Device::Nvptx, 0));
                let space = format!("{}:{id}", dev.keyword());
                self.m.map_enter(map, &space, scope, &ctx.ectx())?;
                let mut dev_scope = Scope::new();
                for item in map {
                    if let Some(&slot) = self.m.spaces.get(&(space.clone(), item.symbol.clone())) {
                        dev_scope.insert(item.symbol.clone(), slot);
                    }
                }
                for (sym, mode) in env {
                    if *mode == CaptureMode::ByValue {
                        if let Some(&slot) = scope.get(sym) {
                            let v = self.m.slots[slot].clone();
                            let new = self.m.alloc_slot(v);
                            dev_scope.insert(sym.clone(), new);
                        }
                    }
                }
                let mut dctx = ctx.clone();
                dctx.space = space.clone();
                self.exec_items(&f.items, &mut dev_scope, &dctx)?;
                let owned: Vec<String> = map
                    .iter()
                    .filter(|i| {
                        i.mapping.known().map(|m| m.property != MappingProp::None).unwrap_or(false)
                    })
                    .map(|i| i.symbol.clone())
                    .collect();
                self.m.map_exit(map, &space, owned, scope, &ctx.ectx())?;
                Ok(())
            }
        }
    }

    fn drain_queue(&mut self) -> RtResult<()> {
        while !self.queue.is_empty() {
            let q = self.queue.remove(0);
            let mut scope = q.scope;
            self.exec_launch(&q.prim, &mut scope, &q.ctx)?;
        }
        Ok(())
    }
}

/// Reduction variables reachable from a body's items (dispatch body functions
/// included): a by-value capture of one must seed the identity.
fn collect_reduce_vars(
    items: &[RtItem],
    rf: &RuntimeForm,
    out: &mut Vec<(String, crate::ast::ReductionOp)>,
) {
    for item in items {
        if let RtItem::Prim(p) = item {
            match p {
                Prim::Reduce { op, vars } => {
                    for v in vars {
                        if !out.iter().any(|(s, _)| s == v) {
                            out.push((v.clone(), *op));
                        }
                    }
                }
                Prim::ForkUnits { func, .. } | Prim::ForkTeams { func, .. } => {
                    if let Some(f) = rf.outlined_fn(func) {
                        collect_reduce_vars(&f.items, rf, out);
                    }
                }
                _ => {}
            }
        }
    }
}
