//! The parallel engine: simulated teams/units with a deterministic
//! cooperative round-robin scheduler.
//!
//! Units switch only at sync points, worksharing chunk boundaries, and task
//! spawns; everything between runs atomically. Reductions combine partial
//! values in ascending unit-id order. Memory spaces are simulated host memory
//! tagged with a space name; an allocation ledger tracks balance.

use super::serial::{
    binop, coerce, index_value, int_add, reduce_combine, reduction_identity, store_indexed, truthy,
};
use super::{rt_err, Options, Outcome, RtError, RtResult, ScheduleEvent, Value};
use crate::ast::{Expr, Intrinsic, ReductionOp, ScalarType, SchedulePolicy};
use crate::ir::*;
use crate::passes::schedule::{static_chunks, trip_count, DynDispatcher};
use std::collections::{BTreeMap, HashMap, VecDeque};

pub(crate) type Scope = HashMap<String, usize>;

pub fn interpret_parallel(
    module: &Module,
    entry: &str,
    inputs: &BTreeMap<String, Value>,
    opts: &Options,
) -> RtResult<Outcome> {
    let Some(func) = module.function(entry) else {
        return rt_err(format!("entry function `{entry}` not found"));
    };
    let mut m = Machine::new(opts.clone());
    let mut scope = Scope::new();
    for p in &func.params {
        let Some(v) = inputs.get(&p.name) else {
            return rt_err(format!("missing input binding for parameter `{}`", p.name));
        };
        let slot = m.alloc_slot(v.clone());
        scope.insert(p.name.clone(), slot);
        m.spaces.insert(("host".into(), p.name.clone()), slot);
    }
    let host = ECtx { team: 0, unit: 0, units: 1, space: "host".into(), in_unit_atomic: false };
    m.exec_region(module, &func.body, &mut scope, &host)?;
    m.drain_tasks(module)?;
    if let Some(open) = m.ledger.iter().find(|l| l.live) {
        return rt_err(format!(
            "allocation ledger not empty at exit: `{}` ({} bytes) in {} never deallocated",
            open.symbol, open.size, open.space
        ));
    }
    let mut buffers = BTreeMap::new();
    for p in &func.params {
        buffers.insert(p.name.clone(), m.slots[scope[&p.name]].clone());
    }
    Ok(Outcome { buffers, trace: m.trace, schedule_log: m.sched, warnings: m.warnings })
}

/// Per-unit iteration assignment log for every worksharing loop, at `p` units.
pub fn trace_schedule(
    module: &Module,
    entry: &str,
    inputs: &BTreeMap<String, Value>,
    p: u32,
) -> RtResult<Vec<ScheduleEvent>> {
    let opts = Options { units_override: Some(p), ..Options::default() };
    Ok(interpret_parallel(module, entry, inputs, &opts)?.schedule_log)
}

#[derive(Clone)]
pub(crate) struct ECtx {
    pub(crate) team: u32,
    pub(crate) unit: u32,
    pub(crate) units: u32,
    /// Memory space name the current code executes in.
    pub(crate) space: String,
    /// Inside a unit's atomic step: blocking syncs are illegal here.
    pub(crate) in_unit_atomic: bool,
}

pub(crate) struct LedgerEntry {
    pub(crate) space: String,
    pub(crate) symbol: String,
    pub(crate) size: i64,
    pub(crate) live: bool,
}

struct PendingTask {
    body: Region,
    kind: TaskKind,
    device: Option<(Device, i64)>,
    data: Vec<DataItem>,
    /// Caller bindings at spawn; by-value captures already snapshotted.
    scope: Scope,
    byval: Vec<(String, Value)>,
    spawn_ctx: ECtx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Flow {
    Normal,
    Return,
}

pub(crate) struct Machine {
    pub(crate) slots: Vec<Value>,
    /// (space, symbol) -> slot for cross-space lookups.
    pub(crate) spaces: HashMap<(String, String), usize>,
    pub(crate) ledger: Vec<LedgerEntry>,
    tasks: VecDeque<PendingTask>,
    pub(crate) trace: Vec<String>,
    step: u64,
    pub(crate) sched: Vec<ScheduleEvent>,
    pub(crate) warnings: Vec<String>,
    pub(crate) opts: Options,
}

impl Machine {
    pub(crate) fn new(opts: Options) -> Self {
        Machine {
            slots: Vec::new(),
            spaces: HashMap::new(),
            ledger: Vec::new(),
            tasks: VecDeque::new(),
            trace: Vec::new(),
            step: 0,
            sched: Vec::new(),
            warnings: Vec::new(),
            opts,
        }
    }

    pub(crate) fn alloc_slot(&mut self, v: Value) -> usize {
        self.slots.push(v);
        self.slots.len() - 1
    }

    pub(crate) fn emit(&mut self, ctx: &ECtx, event: &str, detail: String) {
        if self.opts.collect_trace {
            self.trace.push(format!(
                "t={} unit={}.{} event={event} detail={detail}",
                self.step, ctx.team, ctx.unit
            ));
        }
        self.step += 1;
    }

    pub(crate) fn lookup(&self, scope: &Scope, name: &str, ctx: &ECtx) -> RtResult<usize> {
        scope.get(name).copied().ok_or_else(|| {
            if ctx.space == "host" {
                RtError(format!("read of unbound symbol `{name}`"))
            } else {
                RtError(format!("read of unmapped symbol `{name}` in device space {}", ctx.space))
            }
        })
    }

    // ---- expression evaluation --------------------------------------------

    pub(crate) fn eval(&mut self, e: &Expr, scope: &Scope, ctx: &ECtx) -> RtResult<Value> {
        match e {
            Expr::IntLit(v) => Ok(Value::Int(*v)),
            Expr::FloatLit(v) => Ok(Value::Float(*v)),
            Expr::Ident(n) => Ok(self.slots[self.lookup(scope, n, ctx)?].clone()),
            Expr::Index { base, indices } => {
                let mut idx = Vec::new();
                for i in indices {
                    idx.push(self.int_of(i, scope, ctx)?);
                }
                let slot = self.lookup(scope, base, ctx)?;
                index_value(&self.slots[slot], &idx, base)
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs, scope, ctx)?;
                let b = self.eval(rhs, scope, ctx)?;
                binop(*op, a, b)
            }
            Expr::Neg(inner) => match self.eval(inner, scope, ctx)? {
                Value::Int(v) => Ok(Value::Int(-v)),
                Value::Float(v) => Ok(Value::Float(-v)),
                _ => rt_err("cannot negate an array"),
            },
            Expr::Intrinsic(Intrinsic::UnitId) => Ok(Value::Int(ctx.unit as i64)),
            Expr::Intrinsic(Intrinsic::TeamId) => Ok(Value::Int(ctx.team as i64)),
            Expr::Intrinsic(Intrinsic::UnitsPerTeam) => Ok(Value::Int(ctx.units as i64)),
        }
    }

    pub(crate) fn int_of(&mut self, e: &Expr, scope: &Scope, ctx: &ECtx) -> RtResult<i64> {
        match self.eval(e, scope, ctx)? {
            Value::Int(v) => Ok(v),
            _ => rt_err("expected an integer value"),
        }
    }

    fn store(&mut self, base: &str, indices: &[Expr], v: Value, scope: &Scope, ctx: &ECtx) -> RtResult<()> {
        let mut idx = Vec::new();
        for i in indices {
            idx.push(self.int_of(i, scope, ctx)?);
        }
        let slot = self.lookup(scope, base, ctx)?;
        if idx.is_empty() {
            let coerced = match (&self.slots[slot], &v) {
                (Value::Int(_), Value::Float(_)) => return rt_err("cannot store float into int"),
                (Value::Float(_), Value::Int(i)) => Value::Float(*i as f64),
                _ => v,
            };
            self.slots[slot] = coerced;
            Ok(())
        } else {
            store_indexed(&mut self.slots[slot], &idx, v, base)
        }
    }

    // ---- statement execution (host level and unit-atomic steps) -----------

    pub(crate) fn exec_region(
        &mut self,
        module: &Module,
        region: &Region,
        scope: &mut Scope,
        ctx: &ECtx,
    ) -> RtResult<Flow> {
        for node in &region.nodes {
            if self.exec_node(module, node, scope, ctx)? == Flow::Return {
                return Ok(Flow::Return);
            }
        }
        Ok(Flow::Normal)
    }

    pub(crate) fn exec_node(
        &mut self,
        module: &Module,
        node: &Node,
        scope: &mut Scope,
        ctx: &ECtx,
    ) -> RtResult<Flow> {
        match &node.kind {
            NodeKind::Decl { ty, name, init } => {
                let v = match init {
                    Some(e) => coerce(self.eval(e, scope, ctx)?, *ty),
                    None => match ty {
                        ScalarType::Int => Value::Int(0),
                        _ => Value::Float(0.0),
                    },
                };
                let slot = self.alloc_slot(v);
                scope.insert(name.clone(), slot);
                self.spaces.insert((ctx.space.clone(), name.clone()), slot);
                Ok(Flow::Normal)
            }
            NodeKind::Assign { base, indices, value } => {
                let v = self.eval(value, scope, ctx)?;
                self.store(base, indices, v, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::Call { callee, args } => {
                self.call(module, callee, args, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::Return(_) => {
                if ctx.in_unit_atomic {
                    return rt_err("return inside a parallel region");
                }
                Ok(Flow::Return)
            }
            NodeKind::If(i) => {
                let c = self.eval(&i.cond, scope, ctx)?;
                if truthy(&c) {
                    self.exec_region(module, &i.then_region, scope, ctx)
                } else if let Some(e) = &i.else_region {
                    self.exec_region(module, e, scope, ctx)
                } else {
                    Ok(Flow::Normal)
                }
            }
            NodeKind::BaseFor(f) => {
                let init = self.eval(&f.init, scope, ctx)?;
                let slot = self.alloc_slot(init);
                let old = scope.insert(f.var.clone(), slot);
                loop {
                    let c = self.eval(&f.cond, scope, ctx)?;
                    if !truthy(&c) {
                        break;
                    }
                    if self.exec_region(module, &f.body, scope, ctx)? == Flow::Return {
                        return Ok(Flow::Return);
                    }
                    let step = self.eval(&f.step, scope, ctx)?;
                    self.slots[slot] = int_add(&self.slots[slot].clone(), &step)?;
                }
                restore(scope, &f.var, old);
                Ok(Flow::Normal)
            }
            NodeKind::Loop(l) => self.exec_plain_loop(module, l, scope, ctx),
            NodeKind::Spmd(s) => {
                self.simulate_spmd(module, s, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::Task(t) => {
                self.spawn_task(module, t, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::DataRegion(d) => {
                let space = "nvptx:0".to_string();
                let entered = self.map_enter(&d.data, &space, scope, ctx)?;
                let flow = self.exec_region(module, &d.body, scope, ctx)?;
                self.map_exit(&d.data, &space, entered, scope, ctx)?;
                Ok(flow)
            }
            NodeKind::DataUpdate(u) => {
                self.data_update(u, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::DataMovement(mv) => {
                self.data_movement(mv, scope, ctx)?;
                Ok(Flow::Normal)
            }
            NodeKind::MmAlloc(a) => {
                let size = self.int_of(&a.size, scope, ctx)?;
                if size <= 0 {
                    return rt_err(format!("allocation of `{}` with non-positive size {size}", a.symbol));
                }
                let slot = self.alloc_slot(Value::zero_array(true, vec![(size / 8) as usize]));
                scope.insert(a.symbol.clone(), slot);
                self.spaces.insert((ctx.space.clone(), a.symbol.clone()), slot);
                self.ledger.push(LedgerEntry {
                    space: ctx.space.clone(),
                    symbol: a.symbol.clone(),
                    size,
                    live: true,
                });
                self.emit(ctx, "alloc", format!("space={} symbol={} size={size}", ctx.space, a.symbol));
                Ok(Flow::Normal)
            }
            NodeKind::MmDealloc(d) => {
                let space = ctx.space.clone();
                match self
                    .ledger
                    .iter_mut()
                    .rev()
                    .find(|l| l.symbol == d.symbol && l.space == space && l.live)
                {
                    Some(entry) => {
                        entry.live = false;
                        scope.remove(&d.symbol);
                        self.spaces.remove(&(space.clone(), d.symbol.clone()));
                        self.emit(ctx, "dealloc", format!("space={space} symbol={}", d.symbol));
                        Ok(Flow::Normal)
                    }
                    None => rt_err(format!(
                        "deallocation of `{}` in {space} without a live allocation",
                        d.symbol
                    )),
                }
            }
            NodeKind::Sync(s) => {
                if ctx.in_unit_atomic {
                    return rt_err(format!(
                        "sync `{}` inside a statement context of a parallel region",
                        s.name.keyword()
                    ));
                }
                // Host level: a team of one. Collectives complete trivially.
                match s.name {
                    SyncName::Taskwait => {
                        self.emit(ctx, "taskwait", String::new());
                        self.drain_tasks(module)?;
                    }
                    SyncName::Single | SyncName::Critical | SyncName::Atomic => {
                        self.emit(ctx, s.name.keyword(), String::new());
                        if let Some(body) = &s.body {
                            let mut inner = scope.clone();
                            return self.exec_region(module, body, &mut inner, ctx);
                        }
                    }
                    _ => {
                        self.emit(ctx, s.name.keyword(), "scope=host".into());
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::Ext(_) => Ok(Flow::Normal),
        }
    }

    /// Loops without worksharing run whole in the current context. A simd
    /// annotation is a vectorization hint only.
    fn exec_plain_loop(
        &mut self,
        module: &Module,
        l: &LoopNode,
        scope: &mut Scope,
        ctx: &ECtx,
    ) -> RtResult<Flow> {
        match &l.parallel {
            Some(LoopParallel { kind: LoopParKind::Worksharing { .. } }) => {
                // Validation keeps worksharing inside spmd; reaching one in a
                // statement context means there is no chunking scope.
                if ctx.in_unit_atomic {
                    return rt_err("worksharing loop in a statement context");
                }
                // Host "team" of one unit: execute everything.
                self.run_loop_range(module, l, scope, ctx, None)
            }
            Some(LoopParallel { kind: LoopParKind::Taskloop { grainsize, num_tasks } }) => {
                self.run_taskloop(module, l, grainsize.clone(), num_tasks.clone(), scope, ctx)
            }
            _ => self.run_loop_range(module, l, scope, ctx, None),
        }
    }

    /// Execute loop iterations; `range` selects normalized indices, None
    /// means all.
    fn run_loop_range(
        &mut self,
        module: &Module,
        l: &LoopNode,
        scope: &mut Scope,
        ctx: &ECtx,
        range: Option<(i64, i64)>,
    ) -> RtResult<Flow> {
        let lower = self.int_of(&l.lower, scope, ctx)?;
        let upper = self.int_of(&l.upper, scope, ctx)?;
        let step = self.int_of(&l.step, scope, ctx)?;
        if step <= 0 {
            return rt_err("loop step must be positive");
        }
        let trip = trip_count(lower, upper, step);
        let (lo, hi) = range.unwrap_or((0, trip));
        let slot = self.alloc_slot(Value::Int(0));
        let old = scope.insert(l.induction.clone(), slot);
        for t in lo..hi {
            self.slots[slot] = Value::Int(lower + t * step);
            if self.exec_region(module, &l.body, scope, ctx)? == Flow::Return {
                return rt_err("return inside a loop body");
            }
        }
        restore(scope, &l.induction, old);
        Ok(Flow::Normal)
    }

    fn run_taskloop(
        &mut self,
        module: &Module,
        l: &LoopNode,
        grainsize: Option<Expr>,
        num_tasks: Option<Expr>,
        scope: &mut Scope,
        ctx: &ECtx,
    ) -> RtResult<Flow> {
        let lower = self.int_of(&l.lower, scope, ctx)?;
        let upper = self.int_of(&l.upper, scope, ctx)?;
        let step = self.int_of(&l.step, scope, ctx)?;
        let trip = trip_count(lower, upper, step);
        let grain = match (&grainsize, &num_tasks) {
            (_, Some(n)) => {
                let n = self.int_of(n, scope, ctx)?.max(1);
                (trip + n - 1) / n.max(1)
            }
            (Some(g), None) => self.int_of(g, scope, ctx)?.max(1),
            (None, None) => 1,
        }
        .max(1);
        // Chunks run as tasks in spawn order; deterministic and in-order.
        let mut lo = 0;
        while lo < trip {
            let hi = (lo + grain).min(trip);
            self.emit(ctx, "task_spawn", format!("taskloop chunk=[{lo},{hi})"));
            self.emit(ctx, "task_exec", format!("taskloop chunk=[{lo},{hi})"));
            self.run_loop_range(module, l, scope, ctx, Some((lo, hi)))?;
            lo = hi;
        }
        Ok(Flow::Normal)
    }

    fn call(
        &mut self,
        module: &Module,
        callee: &str,
        args: &[Expr],
        scope: &Scope,
        ctx: &ECtx,
    ) -> RtResult<()> {
        let Some(f) = module.function(callee) else {
            return rt_err(format!("callee `{callee}` not found"));
        };
        self.emit(ctx, "call", format!("@{callee}"));
        let mut callee_scope = Scope::new();
        for (p, a) in f.params.iter().zip(args) {
            // Arrays pass by reference (same slot), scalars by value.
            let slot = match a {
                Expr::Ident(n) => {
                    let s = self.lookup(scope, n, ctx)?;
                    if self.slots[s].is_array() {
                        s
                    } else {
                        let v = self.slots[s].clone();
                        self.alloc_slot(v)
                    }
                }
                _ => {
                    let v = self.eval(a, scope, ctx)?;
                    self.alloc_slot(v)
                }
            };
            callee_scope.insert(p.name.clone(), slot);
        }
        self.exec_region(module, &f.body, &mut callee_scope, ctx)?;
        Ok(())
    }

    // ---- tasks -------------------------------------------------------------

    fn spawn_task(&mut self, module: &Module, t: &TaskNode, scope: &Scope, ctx: &ECtx) -> RtResult<()> {
        let mut byval = Vec::new();
        for item in &t.data {
            if let Some(sh) = item.sharing.known() {
                if matches!(sh.property, SharingProp::Firstprivate | SharingProp::Private) {
                    if let Some(&slot) = scope.get(&item.symbol) {
                        if !self.slots[slot].is_array() {
                            let v = match sh.property {
                                SharingProp::Firstprivate => self.slots[slot].clone(),
                                _ => zero_like(&self.slots[slot]),
                            };
                            byval.push((item.symbol.clone(), v));
                        }
                    }
                }
            }
        }
        let pending = PendingTask {
            body: t.body.clone(),
            kind: t.kind,
            device: t.device,
            data: t.data.clone(),
            scope: scope.clone(),
            byval,
            spawn_ctx: ctx.clone(),
        };
        let depend = t
            .depend
            .iter()
            .map(|(m, v)| format!("{}:{}", m.keyword(), v.name))
            .collect::<Vec<_>>()
            .join(",");
        self.emit(
            ctx,
            "task_spawn",
            format!(
                "kind={:?} async={} depend=[{depend}] policy={:?}",
                t.kind, t.is_async, t.policy
            ),
        );
        let run_now = match t.policy {
            Some(crate::ast::TaskPolicy::WorkFirst) => true,
            Some(crate::ast::TaskPolicy::HelpFirst) => false,
            // Unannotated offload without async runs synchronously (the
            // `target` construct blocks); plain tasks defer.
            None => !t.is_async && matches!(t.kind, TaskKind::Offload | TaskKind::Remote),
        };
        if run_now {
            self.exec_task(module, pending)
        } else {
            self.tasks.push_back(pending);
            Ok(())
        }
    }

    pub(crate) fn drain_tasks(&mut self, module: &Module) -> RtResult<()> {
        while let Some(t) = self.tasks.pop_front() {
            self.exec_task(module, t)?;
        }
        Ok(())
    }

    fn exec_task(&mut self, module: &Module, t: PendingTask) -> RtResult<()> {
        let ctx = t.spawn_ctx.clone();
        match t.kind {
            TaskKind::Plain => {
                self.emit(&ctx, "task_exec", "kind=plain".into());
                let mut scope = t.scope.clone();
                for (name, v) in &t.byval {
                    let slot = self.alloc_slot(v.clone());
                    scope.insert(name.clone(), slot);
                }
                self.exec_region(module, &t.body, &mut scope, &ctx)?;
                Ok(())
            }
            TaskKind::Offload | TaskKind::Remote => {
                let (dev, id) = t.device.unwrap_or((Device::Nvptx, 0));
                let space = format!("{}:{id}", dev.keyword());
                let tag = if t.kind == TaskKind::Remote { "remote " } else { "" };
                self.emit(&ctx, "task_exec", format!("{tag}device={space}"));
                let entered = self.map_enter(&t.data, &space, &t.scope, &ctx)?;
                let mut dev_scope = Scope::new();
                for item in &t.data {
                    if let Some(&slot) = self.spaces.get(&(space.clone(), item.symbol.clone())) {
                        dev_scope.insert(item.symbol.clone(), slot);
                    }
                }
                for (name, v) in &t.byval {
                    let slot = self.alloc_slot(v.clone());
                    dev_scope.insert(name.clone(), slot);
                }
                let dev_ctx = ECtx { space: space.clone(), ..ctx.clone() };
                self.exec_region(module, &t.body, &mut dev_scope, &dev_ctx)?;
                self.map_exit(&t.data, &space, entered, &t.scope, &ctx)?;
                Ok(())
            }
        }
    }

    // ---- mapping and movement ----------------------------------------------

    /// Copy/allocate mapped symbols into `space`. Returns which symbols this
    /// call owns (it allocated them) so the matching exit releases only those.
    pub(crate) fn map_enter(
        &mut self,
        items: &[DataItem],
        space: &str,
        host_scope: &Scope,
        ctx: &ECtx,
    ) -> RtResult<Vec<String>> {
        let mut owned = Vec::new();
        for item in items {
            let Some(mapping) = item.mapping.known() else { continue };
            if mapping.property == MappingProp::None {
                continue;
            }
            let key = (space.to_string(), item.symbol.clone());
            if self.spaces.contains_key(&key) {
                continue; // already resident (enclosing data region owns it)
            }
            let host_slot = self.lookup(host_scope, &item.symbol, ctx)?;
            let host_val = self.slots[host_slot].clone();
            let dev_val = match mapping.property {
                MappingProp::To | MappingProp::ToFrom => host_val,
                MappingProp::From | MappingProp::Allocate => zero_like(&host_val),
                MappingProp::None => unreachable!(),
            };
            let size = dev_val.byte_size();
            let slot = self.alloc_slot(dev_val);
            self.spaces.insert(key, slot);
            self.ledger.push(LedgerEntry {
                space: space.to_string(),
                symbol: item.symbol.clone(),
                size,
                live: true,
            });
            self.emit(
                ctx,
                "map_enter",
                format!("space={space} symbol={} map={}", item.symbol, mapping.property.keyword()),
            );
            owned.push(item.symbol.clone());
        }
        Ok(owned)
    }

    pub(crate) fn map_exit(
        &mut self,
        items: &[DataItem],
        space: &str,
        owned: Vec<String>,
        host_scope: &Scope,
        ctx: &ECtx,
    ) -> RtResult<()> {
        for item in items {
            if !owned.contains(&item.symbol) {
                continue;
            }
            let mapping = item.mapping.known().unwrap();
            let key = (space.to_string(), item.symbol.clone());
            let dev_slot = self.spaces[&key];
            if matches!(mapping.property, MappingProp::From | MappingProp::ToFrom) {
                let host_slot = self.lookup(host_scope, &item.symbol, ctx)?;
                self.slots[host_slot] = self.slots[dev_slot].clone();
            }
            self.spaces.remove(&key);
            match self
                .ledger
                .iter_mut()
                .rev()
                .find(|l| l.symbol == item.symbol && l.space == space && l.live)
            {
                Some(entry) => entry.live = false,
                None => return rt_err(format!("map_exit of `{}` without a live mapping", item.symbol)),
            }
            self.emit(
                ctx,
                "map_exit",
                format!("space={space} symbol={} map={}", item.symbol, mapping.property.keyword()),
            );
        }
        Ok(())
    }

    fn data_update(&mut self, u: &DataUpdateNode, scope: &Scope, ctx: &ECtx) -> RtResult<()> {
        for sym in &u.data {
            // Find the device-resident copy in any non-host space.
            let dev = self
                .spaces
                .iter()
                .find(|((sp, s), _)| sp != "host" && s == sym)
                .map(|((sp, _), slot)| (sp.clone(), *slot));
            let Some((space, dev_slot)) = dev else {
                return rt_err(format!("update of `{sym}` which is not mapped to any device"));
            };
            let host_slot = self.lookup(scope, sym, ctx)?;
            match u.direction {
                Direction::Forward => self.slots[dev_slot] = self.slots[host_slot].clone(),
                Direction::Backward => self.slots[host_slot] = self.slots[dev_slot].clone(),
            }
            self.emit(
                ctx,
                "update",
                format!("symbol={sym} space={space} direction={}", u.direction.keyword()),
            );
        }
        Ok(())
    }

    fn data_movement(&mut self, mv: &DataMovementNode, scope: &Scope, ctx: &ECtx) -> RtResult<()> {
        let size = self.int_of(&mv.size, scope, ctx)?;
        if size <= 0 {
            return rt_err(format!("data movement of non-positive size {size}"));
        }
        let src_key = (super::space_name(&mv.src_space), mv.src.clone());
        let dest_key = (super::space_name(&mv.dest_space), mv.dest.clone());
        let src_slot = match self.spaces.get(&src_key) {
            Some(&s) => s,
            None => self.lookup(scope, &mv.src, ctx)?,
        };
        let Some(&dest_slot) = self.spaces.get(&dest_key) else {
            return rt_err(format!("movement destination `{}` is not allocated in {}", mv.dest, dest_key.0));
        };
        let elems = (size / 8) as usize;
        let src_val = self.slots[src_slot].clone();
        copy_into(&src_val, &mut self.slots[dest_slot], elems)?;
        self.emit(
            ctx,
            "movement",
            format!(
                "src={}:{} dest={}:{} size={size} direction={}",
                src_key.0,
                mv.src,
                dest_key.0,
                mv.dest,
                mv.direction.keyword()
            ),
        );
        Ok(())
    }

    // ---- spmd simulation ----------------------------------------------------

    fn simulate_spmd(
        &mut self,
        module: &Module,
        spmd: &SpmdNode,
        scope: &Scope,
        ctx: &ECtx,
    ) -> RtResult<()> {
        let teams = match (self.opts.teams_override, &spmd.num_teams) {
            (Some(t), _) => t,
            (None, Some(e)) => self.int_of(e, scope, ctx)?.max(1) as u32,
            (None, None) => 1,
        };
        let units = match (self.opts.units_override, &spmd.num_units) {
            (Some(u), _) => u,
            (None, Some(e)) => self.int_of(e, scope, ctx)?.max(1) as u32,
            (None, None) => self.opts.default_units,
        };
        self.emit(ctx, "fork", format!("teams={teams} units={units}"));
        for team in 0..teams {
            run_team(self, module, spmd, scope, ctx, team, teams, units)?;
        }
        Ok(())
    }
}

fn restore(scope: &mut Scope, name: &str, old: Option<usize>) {
    match old {
        Some(s) => {
            scope.insert(name.to_string(), s);
        }
        None => {
            scope.remove(name);
        }
    }
}

fn zero_like(v: &Value) -> Value {
    match v {
        Value::Int(_) => Value::Int(0),
        Value::Float(_) => Value::Float(0.0),
        Value::IntArr { dims, .. } => Value::zero_array(false, dims.clone()),
        Value::FloatArr { dims, .. } => Value::zero_array(true, dims.clone()),
    }
}

fn copy_into(src: &Value, dest: &mut Value, elems: usize) -> RtResult<()> {
    match (src, dest) {
        (Value::IntArr { data: s, .. }, Value::IntArr { data: d, .. }) => {
            let n = elems.min(s.len()).min(d.len());
            d[..n].copy_from_slice(&s[..n]);
            Ok(())
        }
        (Value::FloatArr { data: s, .. }, Value::FloatArr { data: d, .. }) => {
            let n = elems.min(s.len()).min(d.len());
            d[..n].copy_from_slice(&s[..n]);
            Ok(())
        }
        (Value::IntArr { data: s, .. }, Value::FloatArr { data: d, .. }) => {
            let n = elems.min(s.len()).min(d.len());
            for i in 0..n {
                d[i] = s[i] as f64;
            }
            Ok(())
        }
        (s, d) => {
            *d = s.clone();
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Cooperative unit scheduler (one team at a time)
// ---------------------------------------------------------------------------

/// Region path within the spmd body: (node index, child region index) pairs.
type RPath = Vec<(usize, usize)>;

fn resolve<'a>(root: &'a Region, path: &RPath) -> &'a Region {
    let mut region = root;
    for (ni, ri) in path {
        region = region.nodes[*ni].regions()[*ri];
    }
    region
}

#[derive(Debug, Clone, PartialEq)]
enum Status {
    Ready,
    /// Blocked at a collective sync node.
    Blocked(NodeId),
    /// Blocked at an async wait-release.
    AsyncWait(NodeId),
    Done,
}

enum Frame {
    Region {
        path: RPath,
        idx: usize,
    },
    Ws {
        path: RPath,
        node_idx: usize,
        chunks: Vec<(i64, i64)>,
        next: usize,
        dynamic: bool,
        lower: i64,
        step: i64,
        trip: i64,
        saved: Vec<(String, Option<usize>)>,
        lastprivate: Vec<String>,
        reduction_syms: Vec<String>,
        owned_last: bool,
    },
}

struct UnitCtx {
    unit: u32,
    scope: Scope,
    stack: Vec<Frame>,
    status: Status,
}

#[derive(Default)]
struct TeamSync {
    /// node id -> units arrived (collectives) or async arrivals.
    arrived: HashMap<NodeId, Vec<u32>>,
    dispatch: HashMap<NodeId, DynDispatcher>,
}

#[allow(clippy::too_many_arguments)]
fn run_team(
    m: &mut Machine,
    module: &Module,
    spmd: &SpmdNode,
    base_scope: &Scope,
    host_ctx: &ECtx,
    team: u32,
    teams: u32,
    units: u32,
) -> RtResult<()> {
    let mut sync = TeamSync::default();
    let mut ctxs: Vec<UnitCtx> = (0..units)
        .map(|unit| {
            let mut scope = base_scope.clone();
            let _ = apply_privatization(m, spmd, &mut scope, &spmd.data, &spmd.sync, unit);
            UnitCtx { unit, scope, stack: vec![Frame::Region { path: Vec::new(), idx: 0 }], status: Status::Ready }
        })
        .collect();
    loop {
        let mut progressed = false;
        for u in 0..units as usize {
            if ctxs[u].status != Status::Ready {
                continue;
            }
            progressed = true;
            take_turn(m, module, spmd, &mut ctxs, u, &mut sync, host_ctx, team, teams, units)?;
            check_releases(m, spmd, base_scope, &mut ctxs, &mut sync, host_ctx, team, units)?;
        }
        if ctxs.iter().all(|c| c.status == Status::Done) {
            return Ok(());
        }
        if !progressed {
            let stuck: Vec<String> = ctxs
                .iter()
                .filter(|c| c.status != Status::Done)
                .map(|c| format!("unit {} at {:?}", c.unit, c.status))
                .collect();
            return rt_err(format!("deadlock: no unit can make progress ({})", stuck.join("; ")));
        }
    }
}

/// Per-unit privatization of an spmd's data items; reduction variables seed
/// with the operation identity.
fn apply_privatization(
    m: &mut Machine,
    spmd: &SpmdNode,
    scope: &mut Scope,
    items: &[DataItem],
    sync_ids: &[NodeId],
    _unit: u32,
) -> Vec<(String, Option<usize>)> {
    let reduction: Vec<(String, ReductionOp)> = reduction_vars(&spmd.body, sync_ids);
    let mut saved = Vec::new();
    for item in items {
        let Some(sh) = item.sharing.known() else { continue };
        match sh.property {
            SharingProp::Shared => {}
            SharingProp::Private | SharingProp::Firstprivate | SharingProp::Lastprivate => {
                let current = scope.get(&item.symbol).map(|&s| m.slots[s].clone());
                let init = if let Some((_, op)) = reduction.iter().find(|(s, _)| *s == item.symbol) {
                    reduction_identity(*op, current.as_ref().unwrap_or(&Value::Int(0)))
                } else if sh.property == SharingProp::Firstprivate {
                    current.clone().unwrap_or(Value::Int(0))
                } else {
                    zero_like(current.as_ref().unwrap_or(&Value::Int(0)))
                };
                let slot = m.alloc_slot(init);
                saved.push((item.symbol.clone(), scope.insert(item.symbol.clone(), slot)));
            }
        }
    }
    saved
}

/// Reduction (symbol, op) pairs named by a loop's sync list, resolved against
/// the whole module (the nodes sit in the loop's parent region).
fn reduction_vars_by_ids(module: &Module, ids: &[NodeId]) -> Vec<(String, ReductionOp)> {
    let mut out = Vec::new();
    for id in ids {
        if let Some(Node { kind: NodeKind::Sync(s), .. }) = module.find_node(*id) {
            if s.name == SyncName::Reduction {
                if let Some(op) = s.operation {
                    for d in &s.data {
                        out.push((d.clone(), op));
                    }
                }
            }
        }
    }
    out
}

/// Reduction (symbol, op) pairs named by a node's sync list, resolved against
/// the nodes physically present in the region.
fn reduction_vars(region: &Region, sync_ids: &[NodeId]) -> Vec<(String, ReductionOp)> {
    let mut out = Vec::new();
    fn find(region: &Region, ids: &[NodeId], out: &mut Vec<(String, ReductionOp)>) {
        for n in &region.nodes {
            if let NodeKind::Sync(s) = &n.kind {
                if ids.contains(&n.id) && s.name == SyncName::Reduction {
                    if let Some(op) = s.operation {
                        for d in &s.data {
                            out.push((d.clone(), op));
                        }
                    }
                }
            }
            for r in n.regions() {
                find(r, ids, out);
            }
        }
    }
    find(region, sync_ids, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn take_turn(
    m: &mut Machine,
    module: &Module,
    spmd: &SpmdNode,
    ctxs: &mut [UnitCtx],
    u: usize,
    sync: &mut TeamSync,
    host_ctx: &ECtx,
    team: u32,
    teams: u32,
    units: u32,
) -> RtResult<()> {
    let ectx = ECtx {
        team,
        unit: ctxs[u].unit,
        units,
        space: host_ctx.space.clone(),
        in_unit_atomic: true,
    };
    loop {
        let Some(frame) = ctxs[u].stack.last() else {
            ctxs[u].status = Status::Done;
            return Ok(());
        };
        match frame {
            Frame::Region { path, idx } => {
                let path = path.clone();
                let idx = *idx;
                let region = resolve(&spmd.body, &path);
                if idx >= region.nodes.len() {
                    ctxs[u].stack.pop();
                    continue;
                }
                let node = &region.nodes[idx];
                if let Frame::Region { idx: i, .. } = ctxs[u].stack.last_mut().unwrap() {
                    *i += 1;
                }
                match &node.kind {
                    NodeKind::If(ifn) => {
                        let c = m.eval(&ifn.cond, &ctxs[u].scope, &ectx)?;
                        let sel = if truthy(&c) {
                            Some(0)
                        } else if ifn.else_region.is_some() {
                            Some(1)
                        } else {
                            None
                        };
                        if let Some(ri) = sel {
                            let mut new_path = path.clone();
                            new_path.push((idx, ri));
                            ctxs[u].stack.push(Frame::Region { path: new_path, idx: 0 });
                        }
                        continue;
                    }
                    NodeKind::Loop(l)
                        if matches!(
                            l.parallel,
                            Some(LoopParallel { kind: LoopParKind::Worksharing { .. } })
                        ) =>
                    {
                        enter_ws_loop(m, module, spmd, ctxs, u, sync, &ectx, l, &path, idx, team, teams, units)?;
                        continue;
                    }
                    NodeKind::Sync(s) => {
                        let yielded = exec_unit_sync(m, module, node.id, s, ctxs, u, sync, &ectx, units)?;
                        if yielded {
                            return Ok(());
                        }
                        continue;
                    }
                    NodeKind::Task(_) => {
                        let mut scope = std::mem::take(&mut ctxs[u].scope);
                        let r = m.exec_node(module, node, &mut scope, &ectx);
                        ctxs[u].scope = scope;
                        r?;
                        // Task spawn is a yield point.
                        return Ok(());
                    }
                    _ => {
                        let mut scope = std::mem::take(&mut ctxs[u].scope);
                        let r = m.exec_node(module, node, &mut scope, &ectx);
                        ctxs[u].scope = scope;
                        r?;
                        continue;
                    }
                }
            }
            Frame::Ws { .. } => {
                if ws_turn(m, module, spmd, ctxs, u, sync, &ectx)? {
                    return Ok(());
                }
                continue;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn enter_ws_loop(
    m: &mut Machine,
    module: &Module,
    spmd: &SpmdNode,
    ctxs: &mut [UnitCtx],
    u: usize,
    sync: &mut TeamSync,
    ectx: &ECtx,
    l: &LoopNode,
    path: &RPath,
    node_idx: usize,
    team: u32,
    teams: u32,
    units: u32,
) -> RtResult<()> {
    let Some(LoopParallel { kind: LoopParKind::Worksharing { schedule, chunk, distribute } }) = &l.parallel
    else {
        unreachable!()
    };
    let lower = m.int_of(&l.lower, &ctxs[u].scope, ectx)?;
    let upper = m.int_of(&l.upper, &ctxs[u].scope, ectx)?;
    let step = m.int_of(&l.step, &ctxs[u].scope, ectx)?;
    if step <= 0 {
        return rt_err("worksharing loop step must be positive");
    }
    let trip = trip_count(lower, upper, step);
    let chunk_size = match chunk {
        Some(e) => Some(m.int_of(e, &ctxs[u].scope, ectx)?),
        None => None,
    };
    let mut policy = *schedule;
    if matches!(policy, SchedulePolicy::Runtime | SchedulePolicy::Auto) {
        if !m.warnings.iter().any(|w| w.contains("resolves to static")) {
            m.warnings.push(format!("schedule({}) resolves to static", policy.keyword()));
        }
        policy = SchedulePolicy::Static;
    }
    // The team's slice of the iteration space.
    let (team_lo, team_hi) = match distribute {
        DistributeTarget::Units => (0, trip),
        DistributeTarget::Teams | DistributeTarget::TeamsUnits => {
            let team_chunks = static_chunks(trip, teams, None, team);
            match team_chunks.as_slice() {
                [] => (0, 0),
                chunks => (chunks[0].0, chunks[chunks.len() - 1].1),
            }
        }
    };
    let unit = ctxs[u].unit;
    let (chunks, dynamic) = match distribute {
        // distribute(teams): the team executes its slice on unit 0.
        DistributeTarget::Teams => {
            if unit == 0 {
                (vec![(team_lo, team_hi)], false)
            } else {
                (Vec::new(), false)
            }
        }
        _ => match policy {
            SchedulePolicy::Static => {
                let local = static_chunks(team_hi - team_lo, units, chunk_size, unit);
                (local.into_iter().map(|(a, b)| (a + team_lo, b + team_lo)).collect(), false)
            }
            SchedulePolicy::Dynamic | SchedulePolicy::Guided => {
                sync.dispatch.entry(/* loop */ node_id_of(&spmd.body, path, node_idx)).or_insert_with(|| {
                    DynDispatcher::new(policy, team_lo, team_hi, units, chunk_size)
                });
                (Vec::new(), true)
            }
            _ => unreachable!(),
        },
    };
    // Privatize the loop's data items; the induction variable always gets a
    // fresh private slot.
    let loop_reductions = reduction_vars_by_ids(module, &l.sync);
    let reduction_syms: Vec<String> = loop_reductions.iter().map(|(s, _)| s.clone()).collect();
    let mut saved = Vec::new();
    let mut lastprivate = Vec::new();
    for item in &l.data {
        let Some(sh) = item.sharing.known() else { continue };
        match sh.property {
            SharingProp::Shared => {}
            prop => {
                let current = ctxs[u].scope.get(&item.symbol).map(|&s| m.slots[s].clone());
                let init = if let Some((_, op)) =
                    loop_reductions.iter().find(|(s, _)| *s == item.symbol)
                {
                    reduction_identity(*op, current.as_ref().unwrap_or(&Value::Int(0)))
                } else if prop == SharingProp::Firstprivate {
                    current.clone().unwrap_or(Value::Int(0))
                } else {
                    zero_like(current.as_ref().unwrap_or(&Value::Int(0)))
                };
                if prop == SharingProp::Lastprivate {
                    lastprivate.push(item.symbol.clone());
                }
                let slot = m.alloc_slot(init);
                saved.push((item.symbol.clone(), ctxs[u].scope.insert(item.symbol.clone(), slot)));
            }
        }
    }
    if !saved.iter().any(|(s, _)| s == &l.induction) {
        let slot = m.alloc_slot(Value::Int(0));
        saved.push((l.induction.clone(), ctxs[u].scope.insert(l.induction.clone(), slot)));
    }
    ctxs[u].stack.push(Frame::Ws {
        path: path.clone(),
        node_idx,
        chunks,
        next: 0,
        dynamic,
        lower,
        step,
        trip,
        saved,
        lastprivate,
        reduction_syms,
        owned_last: false,
    });
    Ok(())
}

fn node_id_of(root: &Region, path: &RPath, node_idx: usize) -> NodeId {
    resolve(root, path).nodes[node_idx].id
}

/// One worksharing turn: execute the unit's next chunk, or wind the loop down.
/// Returns true when the turn ends (yield).
fn ws_turn(
    m: &mut Machine,
    module: &Module,
    spmd: &SpmdNode,
    ctxs: &mut [UnitCtx],
    u: usize,
    sync: &mut TeamSync,
    ectx: &ECtx,
) -> RtResult<bool> {
    let Some(Frame::Ws { path, node_idx, .. }) = ctxs[u].stack.last() else { unreachable!() };
    let (path, node_idx) = (path.clone(), *node_idx);
    let loop_id = node_id_of(&spmd.body, &path, node_idx);
    let region = resolve(&spmd.body, &path);
    let NodeKind::Loop(l) = &region.nodes[node_idx].kind else { unreachable!() };

    // Pick the next chunk.
    let next_chunk: Option<(i64, i64)> = {
        let Some(Frame::Ws { chunks, next, dynamic, .. }) = ctxs[u].stack.last_mut() else {
            unreachable!()
        };
        if *dynamic {
            sync.dispatch.get_mut(&loop_id).and_then(|d| d.next_chunk())
        } else if *next < chunks.len() {
            let c = chunks[*next];
            *next += 1;
            Some(c)
        } else {
            None
        }
    };

    match next_chunk {
        Some((lo, hi)) => {
            let (lower, step, trip) = {
                let Some(Frame::Ws { lower, step, trip, .. }) = ctxs[u].stack.last() else {
                    unreachable!()
                };
                (*lower, *step, *trip)
            };
            let ind_slot = ctxs[u].scope[&l.induction];
            for t in lo..hi {
                m.slots[ind_slot] = Value::Int(lower + t * step);
                let mut scope = std::mem::take(&mut ctxs[u].scope);
                let r = m.exec_region(module, &l.body, &mut scope, ectx);
                ctxs[u].scope = scope;
                r?;
            }
            m.emit(ectx, "chunk", format!("loop={loop_id} range=[{lo},{hi})"));
            m.sched.push(ScheduleEvent {
                loop_id,
                team: ectx.team,
                unit: ectx.unit,
                chunk: (lo, hi),
            });
            if hi == trip && lo < hi {
                if let Some(Frame::Ws { owned_last, .. }) = ctxs[u].stack.last_mut() {
                    *owned_last = true;
                }
            }
            Ok(true) // chunk boundary: yield
        }
        None => {
            // Loop done for this unit: write back lastprivates if it owned the
            // final iteration, then restore bindings (reduction vars keep
            // their private slots until the reduction node combines them).
            let frame = ctxs[u].stack.pop().expect("ws frame");
            let Frame::Ws { saved, lastprivate, reduction_syms, owned_last, dynamic, .. } = frame
            else {
                unreachable!()
            };
            if dynamic {
                // Drop the dispatcher once no unit still runs this loop, so a
                // re-execution (loop inside a loop) starts fresh.
                let anyone = ctxs.iter().any(|c| {
                    c.stack.iter().any(|f| matches!(f, Frame::Ws { path: p, node_idx: ni, .. }
                        if node_id_of(&spmd.body, p, *ni) == loop_id))
                });
                if !anyone {
                    sync.dispatch.remove(&loop_id);
                }
            }
            if owned_last {
                for sym in &lastprivate {
                    let private = ctxs[u].scope[sym];
                    if let Some((_, Some(shared))) = saved.iter().find(|(s, _)| s == sym) {
                        let v = m.slots[private].clone();
                        m.slots[*shared] = v;
                    }
                }
            }
            for (sym, old) in saved {
                if reduction_syms.contains(&sym) {
                    continue;
                }
                restore(&mut ctxs[u].scope, &sym, old);
            }
            Ok(false)
        }
    }
}

/// Collective and point-to-point syncs at unit level. Returns true when the
/// unit yields (blocked or just arrived).
#[allow(clippy::too_many_arguments)]
fn exec_unit_sync(
    m: &mut Machine,
    module: &Module,
    id: NodeId,
    s: &SyncNode,
    ctxs: &mut [UnitCtx],
    u: usize,
    sync: &mut TeamSync,
    ectx: &ECtx,
    units: u32,
) -> RtResult<bool> {
    let unit = ctxs[u].unit;
    match (s.name, s.mode) {
        (SyncName::Taskwait, _) => {
            m.emit(ectx, "taskwait", String::new());
            m.drain_tasks(module)?;
            Ok(true)
        }
        (SyncName::Single, _) => {
            m.emit(ectx, "single", format!("executing={}", unit == 0));
            if unit == 0 {
                if let Some(body) = &s.body {
                    let mut scope = std::mem::take(&mut ctxs[u].scope);
                    let mut atomic = ectx.clone();
                    atomic.in_unit_atomic = true;
                    let r = m.exec_region(module, body, &mut scope, &atomic);
                    ctxs[u].scope = scope;
                    r?;
                }
            }
            Ok(false)
        }
        (SyncName::Critical | SyncName::Atomic, _) => {
            m.emit(ectx, s.name.keyword(), String::new());
            if let Some(body) = &s.body {
                let mut scope = std::mem::take(&mut ctxs[u].scope);
                let mut atomic = ectx.clone();
                atomic.in_unit_atomic = true;
                let r = m.exec_region(module, body, &mut scope, &atomic);
                ctxs[u].scope = scope;
                r?;
            }
            // Mutual exclusion is a scheduling point.
            Ok(true)
        }
        (SyncName::Send | SyncName::Recv, _) => {
            // Participants: primary sends, secondary receives.
            let src = sync_unit_id(m, &s.primary, &ctxs[u].scope, ectx)?;
            let dst = sync_unit_id(m, &s.secondary, &ctxs[u].scope, ectx)?;
            if Some(unit) != src && Some(unit) != dst {
                return Ok(false);
            }
            let arrived = sync.arrived.entry(id).or_default();
            if !arrived.contains(&unit) {
                arrived.push(unit);
            }
            m.emit(ectx, s.name.keyword(), format!("src={src:?} dst={dst:?}"));
            ctxs[u].status = Status::Blocked(id);
            Ok(true)
        }
        (_, SyncMode::Async(SyncStep::ArriveCompute)) => {
            let arrived = sync.arrived.entry(id).or_default();
            if !arrived.contains(&unit) {
                arrived.push(unit);
            }
            m.emit(ectx, s.name.keyword(), "step=arrive-compute".into());
            Ok(true)
        }
        (_, SyncMode::Async(SyncStep::WaitRelease)) => {
            // Pairs match on shape; arrivals were counted at the arrive node,
            // which shares every field except the step.
            let matching = find_matching_arrive(m, module, s, &sync.arrived);
            match matching {
                Some(arr_id) if sync.arrived.get(&arr_id).map(|v| v.len()).unwrap_or(0) == units as usize => {
                    m.emit(ectx, s.name.keyword(), "step=wait-release".into());
                    Ok(false)
                }
                Some(arr_id) => {
                    ctxs[u].status = Status::AsyncWait(arr_id);
                    m.emit(ectx, s.name.keyword(), "step=wait-release-blocked".into());
                    Ok(true)
                }
                None => rt_err(format!("unmatched async wait-release `{}`", s.name.keyword())),
            }
        }
        // Synchronous collectives block until the whole team arrives.
        (_, SyncMode::Sync) => {
            let arrived = sync.arrived.entry(id).or_default();
            if !arrived.contains(&unit) {
                arrived.push(unit);
            }
            m.emit(
                ectx,
                s.name.keyword(),
                format!("step=arrive-compute implicit={}", s.implicit),
            );
            ctxs[u].status = Status::Blocked(id);
            Ok(true)
        }
    }
}

fn sync_unit_id(m: &mut Machine, su: &SyncUnit, scope: &Scope, ectx: &ECtx) -> RtResult<Option<u32>> {
    match &su.unit {
        SyncUnitId::All => Ok(None),
        SyncUnitId::Id(e) => Ok(Some(m.int_of(e, scope, ectx)? as u32)),
    }
}

/// Arrive node whose shape matches the wait node `s` and has arrivals.
fn find_matching_arrive(
    _m: &Machine,
    module: &Module,
    s: &SyncNode,
    arrived: &HashMap<NodeId, Vec<u32>>,
) -> Option<NodeId> {
    let mut found = None;
    module.walk(&mut |n| {
        if found.is_some() {
            return;
        }
        if let NodeKind::Sync(other) = &n.kind {
            if other.mode == SyncMode::Async(SyncStep::ArriveCompute)
                && other.name == s.name
                && other.primary == s.primary
                && other.secondary == s.secondary
                && other.data == s.data
                && arrived.contains_key(&n.id)
            {
                found = Some(n.id);
            }
        }
    });
    found
}

/// Release collectives whose whole team has arrived. Reductions and friends
/// combine their data here, in ascending unit-id order.
fn check_releases(
    m: &mut Machine,
    spmd: &SpmdNode,
    base_scope: &Scope,
    ctxs: &mut [UnitCtx],
    sync: &mut TeamSync,
    host_ctx: &ECtx,
    team: u32,
    units: u32,
) -> RtResult<()> {
    // Async waits unblock once all arrivals happened.
    for c in ctxs.iter_mut() {
        if let Status::AsyncWait(arr_id) = c.status {
            if sync.arrived.get(&arr_id).map(|v| v.len()).unwrap_or(0) == units as usize {
                c.status = Status::Ready;
            }
        }
    }
    let blocked_ids: Vec<NodeId> = ctxs
        .iter()
        .filter_map(|c| match c.status {
            Status::Blocked(id) => Some(id),
            _ => None,
        })
        .collect();
    for id in blocked_ids {
        let node = find_sync(spmd, id).expect("blocked sync node must exist");
        let expected = match node.name {
            SyncName::Send | SyncName::Recv => {
                let mut ids = Vec::new();
                for su in [&node.primary, &node.secondary] {
                    if let SyncUnitId::Id(e) = &su.unit {
                        if let Some(v) = e.as_int_const() {
                            if !ids.contains(&(v as u32)) {
                                ids.push(v as u32);
                            }
                        }
                    }
                }
                ids.len().max(1)
            }
            _ => units as usize,
        };
        let have = sync.arrived.get(&id).map(|v| v.len()).unwrap_or(0);
        if have < expected {
            continue;
        }
        apply_release_effects(m, &node, base_scope, ctxs, host_ctx, team, units)?;
        for c in ctxs.iter_mut() {
            if c.status == Status::Blocked(id) {
                c.status = Status::Ready;
            }
        }
        sync.arrived.remove(&id);
        let ectx = ECtx {
            team,
            unit: 0,
            units,
            space: host_ctx.space.clone(),
            in_unit_atomic: false,
        };
        m.emit(&ectx, node.name.keyword(), "step=wait-release".into());
    }
    Ok(())
}

fn find_sync(spmd: &SpmdNode, id: NodeId) -> Option<SyncNode> {
    let mut found = None;
    fn go(region: &Region, id: NodeId, found: &mut Option<SyncNode>) {
        for n in &region.nodes {
            if n.id == id {
                if let NodeKind::Sync(s) = &n.kind {
                    *found = Some(s.clone());
                }
            }
            for r in n.regions() {
                go(r, id, found);
            }
        }
    }
    go(&spmd.body, id, &mut found);
    found
}

fn apply_release_effects(
    m: &mut Machine,
    s: &SyncNode,
    base_scope: &Scope,
    ctxs: &mut [UnitCtx],
    host_ctx: &ECtx,
    team: u32,
    units: u32,
) -> RtResult<()> {
    let ectx = ECtx { team, unit: 0, units, space: host_ctx.space.clone(), in_unit_atomic: false };
    match s.name {
        SyncName::Reduction | SyncName::Allreduce => {
            let Some(op) = s.operation else {
                return rt_err("reduction sync without an operation");
            };
            for sym in &s.data {
                // Combine partial values in ascending unit-id order, seeding
                // with the shared (pre-region) value.
                let Some(&shared_slot) = base_scope.get(sym) else {
                    return rt_err(format!("reduction variable `{sym}` has no shared binding"));
                };
                let mut total = m.slots[shared_slot].clone();
                for c in ctxs.iter() {
                    let Some(&slot) = c.scope.get(sym) else { continue };
                    if slot == shared_slot {
                        continue; // never privatized (degenerate)
                    }
                    let v = m.slots[slot].clone();
                    total = reduce_combine(op, total, v)?;
                }
                m.slots[shared_slot] = total.clone();
                for c in ctxs.iter_mut() {
                    if s.name == SyncName::Allreduce {
                        if let Some(&slot) = c.scope.get(sym) {
                            m.slots[slot] = total.clone();
                        }
                    } else {
                        c.scope.insert(sym.clone(), shared_slot);
                    }
                }
                m.emit(&ectx, "reduce", format!("op={} symbol={sym}", op.symbol()));
            }
            Ok(())
        }
        SyncName::Broadcast => {
            let src = match &s.primary.unit {
                SyncUnitId::Id(e) => e.as_int_const().unwrap_or(0) as usize,
                SyncUnitId::All => 0,
            };
            for sym in &s.data {
                if let Some(&src_slot) = ctxs.get(src).and_then(|c| c.scope.get(sym)) {
                    let v = m.slots[src_slot].clone();
                    for c in ctxs.iter() {
                        if let Some(&slot) = c.scope.get(sym) {
                            m.slots[slot] = v.clone();
                        }
                    }
                }
            }
            m.emit(&ectx, "broadcast", format!("data={:?}", s.data));
            Ok(())
        }
        SyncName::Send | SyncName::Recv => {
            let src = match &s.primary.unit {
                SyncUnitId::Id(e) => e.as_int_const().unwrap_or(0) as usize,
                SyncUnitId::All => 0,
            };
            let dst = match &s.secondary.unit {
                SyncUnitId::Id(e) => e.as_int_const().unwrap_or(0) as usize,
                SyncUnitId::All => 0,
            };
            for sym in &s.data {
                let sv = ctxs.get(src).and_then(|c| c.scope.get(sym)).map(|&sl| m.slots[sl].clone());
                if let (Some(v), Some(&dslot)) = (sv, ctxs.get(dst).and_then(|c| c.scope.get(sym))) {
                    m.slots[dslot] = v;
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}
