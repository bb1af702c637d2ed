//! Lowering to runtime form: function outlining plus a sequence of runtime
//! primitives (fork, launch, dispatch, barrier, reduce, map, alloc, memcpy).
//!
//! Capture modes derive from data attributes: shared symbols go by reference,
//! private/firstprivate by value. The runtime form serializes to a
//! human-readable `.rtf.txt` trace, one primitive per line, and replays to
//! the same observable behavior as interpreting the source module.

use crate::ast::{DependMode, Expr, ReductionOp, TaskPolicy};
use crate::diag::{Diag, Pos, Result};
use crate::ir::print::pe;
use crate::ir::*;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    ByValue,
    ByReference,
}

impl CaptureMode {
    fn keyword(&self) -> &'static str {
        match self {
            CaptureMode::ByValue => "by-val",
            CaptureMode::ByReference => "by-ref",
        }
    }
}

#[derive(Debug, Clone)]
pub enum RtItem {
    Prim(Prim),
    /// Base statement carried through unchanged; contains no parallel nodes.
    Stmt(Node),
}

#[derive(Debug, Clone)]
pub enum LoweredSchedule {
    Worksharing { policy: crate::ast::SchedulePolicy, chunk: Option<Expr>, distribute: DistributeTarget },
    Taskloop { grainsize: Option<Expr>, num_tasks: Option<Expr> },
}

#[derive(Debug, Clone)]
pub enum Prim {
    ForkTeams { count: Option<Expr>, func: String, env: Vec<(String, CaptureMode)> },
    ForkUnits { count: Option<Expr>, func: String, env: Vec<(String, CaptureMode)> },
    LaunchTask {
        kind: TaskKind,
        device: Option<(Device, i64)>,
        func: String,
        env: Vec<(String, CaptureMode)>,
        depend: Vec<(DependMode, String)>,
        is_async: bool,
        policy: Option<TaskPolicy>,
        map: Vec<DataItem>,
    },
    DispatchLoop {
        desc: LoweredSchedule,
        body_func: String,
        induction: String,
        lower: Expr,
        upper: Expr,
        step: Expr,
    },
    Barrier { implicit: bool },
    Reduce { op: ReductionOp, vars: Vec<String> },
    MapEnter { space: (Device, i64), items: Vec<DataItem> },
    MapExit { space: (Device, i64), items: Vec<DataItem> },
    Alloc { symbol: String, size: Expr, allocator: AllocatorAttr },
    Dealloc { symbol: String, deallocator: DeallocatorAttr },
    Memcpy {
        dest_space: MemSpace,
        dest: String,
        src_space: MemSpace,
        src: String,
        size: Expr,
        direction: Direction,
    },
    Update { symbols: Vec<String>, direction: Direction },
    TaskWait,
    Exclusive { name: SyncName, func: String },
}

#[derive(Debug, Clone)]
pub struct OutlinedFn {
    pub name: String,
    pub captures: Vec<(String, CaptureMode)>,
    pub items: Vec<RtItem>,
}

#[derive(Debug, Clone)]
pub struct LoweredFn {
    pub name: String,
    pub params: Vec<crate::ast::Param>,
    pub items: Vec<RtItem>,
}

#[derive(Debug, Clone, Default)]
pub struct RuntimeForm {
    pub functions: Vec<LoweredFn>,
    pub outlined: Vec<OutlinedFn>,
}

impl RuntimeForm {
    pub fn outlined_fn(&self, name: &str) -> Option<&OutlinedFn> {
        self.outlined.iter().find(|f| f.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&LoweredFn> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Total number of runtime primitives across all bodies.
    pub fn prim_count(&self) -> usize {
        fn count(items: &[RtItem]) -> usize {
            items.iter().filter(|i| matches!(i, RtItem::Prim(_))).count()
        }
        self.functions.iter().map(|f| count(&f.items)).sum::<usize>()
            + self.outlined.iter().map(|f| count(&f.items)).sum::<usize>()
    }
}

pub fn lower_to_runtime(module: &Module) -> Result<RuntimeForm> {
    let mut l = Lowerer { rf: RuntimeForm::default(), counter: 0 };
    for f in &module.functions {
        let items = l.lower_region(&f.body)?;
        l.rf.functions.push(LoweredFn { name: f.name.clone(), params: f.params.clone(), items });
    }
    Ok(l.rf)
}

struct Lowerer {
    rf: RuntimeForm,
    counter: u32,
}

impl Lowerer {
    fn outline(&mut self, prefix: &str, captures: Vec<(String, CaptureMode)>, items: Vec<RtItem>) -> String {
        let name = format!("__{prefix}_{}", self.counter);
        self.counter += 1;
        self.rf.outlined.push(OutlinedFn { name: name.clone(), captures, items });
        name
    }

    fn lower_region(&mut self, region: &Region) -> Result<Vec<RtItem>> {
        let mut items = Vec::new();
        for node in &region.nodes {
            self.lower_node(node, &mut items)?;
        }
        Ok(items)
    }

    fn lower_node(&mut self, node: &Node, out: &mut Vec<RtItem>) -> Result<()> {
        match &node.kind {
            NodeKind::Spmd(s) => {
                let env = captures_of(&s.data);
                let body = self.lower_region(&s.body)?;
                let inner = self.outline("spmd", env.clone(), body);
                match (&s.num_teams, &s.num_units) {
                    (Some(teams), units) => {
                        let fork_units = Prim::ForkUnits {
                            count: units.clone(),
                            func: inner,
                            env: env.clone(),
                        };
                        let wrapper =
                            self.outline("teams", env.clone(), vec![RtItem::Prim(fork_units)]);
                        out.push(RtItem::Prim(Prim::ForkTeams {
                            count: Some(teams.clone()),
                            func: wrapper,
                            env,
                        }));
                    }
                    (None, units) => {
                        out.push(RtItem::Prim(Prim::ForkUnits { count: units.clone(), func: inner, env }));
                    }
                }
                Ok(())
            }
            NodeKind::Task(t) => {
                let env = captures_of(&t.data);
                let body = self.lower_region(&t.body)?;
                let func = self.outline("task", env.clone(), body);
                let map: Vec<DataItem> = t
                    .data
                    .iter()
                    .filter(|i| {
                        i.mapping.known().map(|m| m.property != MappingProp::None).unwrap_or(false)
                    })
                    .cloned()
                    .collect();
                out.push(RtItem::Prim(Prim::LaunchTask {
                    kind: t.kind,
                    device: t.device,
                    func,
                    env,
                    depend: t.depend.iter().map(|(m, v)| (*m, v.name.clone())).collect(),
                    is_async: t.is_async,
                    policy: t.policy,
                    map,
                }));
                Ok(())
            }
            NodeKind::Loop(l) => match &l.parallel {
                Some(LoopParallel { kind: LoopParKind::Worksharing { schedule, chunk, distribute } }) => {
                    let env: Vec<(String, CaptureMode)> = captures_of(&l.data)
                        .into_iter()
                        .filter(|(s, _)| *s != l.induction)
                        .collect();
                    let body = self.lower_region(&l.body)?;
                    let func = self.outline("loop_body", env.clone(), body);
                    out.push(RtItem::Prim(Prim::DispatchLoop {
                        desc: LoweredSchedule::Worksharing {
                            policy: *schedule,
                            chunk: chunk.clone(),
                            distribute: *distribute,
                        },
                        body_func: func,
                        induction: l.induction.clone(),
                        lower: l.lower.clone(),
                        upper: l.upper.clone(),
                        step: l.step.clone(),
                    }));
                    Ok(())
                }
                Some(LoopParallel { kind: LoopParKind::Taskloop { grainsize, num_tasks } }) => {
                    let env: Vec<(String, CaptureMode)> = captures_of(&l.data)
                        .into_iter()
                        .filter(|(s, _)| *s != l.induction)
                        .collect();
                    let body = self.lower_region(&l.body)?;
                    let func = self.outline("loop_body", env.clone(), body);
                    out.push(RtItem::Prim(Prim::DispatchLoop {
                        desc: LoweredSchedule::Taskloop {
                            grainsize: grainsize.clone(),
                            num_tasks: num_tasks.clone(),
                        },
                        body_func: func,
                        induction: l.induction.clone(),
                        lower: l.lower.clone(),
                        upper: l.upper.clone(),
                        step: l.step.clone(),
                    }));
                    Ok(())
                }
                _ => {
                    // Plain (or simd-annotated) loop: base statement with a
                    // lowered body carried in place.
                    ensure_no_parallel(&l.body)?;
                    out.push(RtItem::Stmt(node.clone()));
                    Ok(())
                }
            },
            NodeKind::DataRegion(d) => {
                let space = (Device::Nvptx, 0);
                out.push(RtItem::Prim(Prim::MapEnter { space, items: d.data.clone() }));
                let mut inner = self.lower_region(&d.body)?;
                out.append(&mut inner);
                out.push(RtItem::Prim(Prim::MapExit { space, items: d.data.clone() }));
                Ok(())
            }
            NodeKind::Sync(s) => {
                match s.name {
                    SyncName::Barrier => out.push(RtItem::Prim(Prim::Barrier { implicit: s.implicit })),
                    SyncName::Reduction => {
                        let Some(op) = s.operation else {
                            return Err(err("reduction sync without operation"));
                        };
                        out.push(RtItem::Prim(Prim::Reduce { op, vars: s.data.clone() }));
                    }
                    SyncName::Taskwait => out.push(RtItem::Prim(Prim::TaskWait)),
                    SyncName::Single | SyncName::Critical | SyncName::Atomic => {
                        let body = match &s.body {
                            Some(b) => self.lower_region(b)?,
                            None => Vec::new(),
                        };
                        let func = self.outline("excl", Vec::new(), body);
                        out.push(RtItem::Prim(Prim::Exclusive { name: s.name, func }));
                    }
                    other => {
                        return Err(err(format!(
                            "sync `{}` has no runtime-form lowering",
                            other.keyword()
                        )))
                    }
                }
                Ok(())
            }
            NodeKind::DataUpdate(u) => {
                out.push(RtItem::Prim(Prim::Update { symbols: u.data.clone(), direction: u.direction }));
                Ok(())
            }
            NodeKind::DataMovement(mv) => {
                out.push(RtItem::Prim(Prim::Memcpy {
                    dest_space: mv.dest_space.clone(),
                    dest: mv.dest.clone(),
                    src_space: mv.src_space.clone(),
                    src: mv.src.clone(),
                    size: mv.size.clone(),
                    direction: mv.direction,
                }));
                Ok(())
            }
            NodeKind::MmAlloc(a) => {
                out.push(RtItem::Prim(Prim::Alloc {
                    symbol: a.symbol.clone(),
                    size: a.size.clone(),
                    allocator: a.allocator.clone(),
                }));
                Ok(())
            }
            NodeKind::MmDealloc(d) => {
                out.push(RtItem::Prim(Prim::Dealloc {
                    symbol: d.symbol.clone(),
                    deallocator: d.deallocator.clone(),
                }));
                Ok(())
            }
            NodeKind::Ext(_) => Ok(()),
            NodeKind::If(i) => {
                ensure_no_parallel(&i.then_region)?;
                if let Some(e) = &i.else_region {
                    ensure_no_parallel(e)?;
                }
                out.push(RtItem::Stmt(node.clone()));
                Ok(())
            }
            NodeKind::BaseFor(f) => {
                ensure_no_parallel(&f.body)?;
                out.push(RtItem::Stmt(node.clone()));
                Ok(())
            }
            NodeKind::Decl { .. } | NodeKind::Assign { .. } | NodeKind::Call { .. } | NodeKind::Return(_) => {
                out.push(RtItem::Stmt(node.clone()));
                Ok(())
            }
        }
    }
}

/// Capture list: the node's data items in order. Shared goes by reference,
/// private-like by value.
fn captures_of(items: &[DataItem]) -> Vec<(String, CaptureMode)> {
    items
        .iter()
        .map(|item| {
            let mode = match item.sharing.known().map(|s| s.property) {
                Some(SharingProp::Shared) | None => CaptureMode::ByReference,
                Some(_) => CaptureMode::ByValue,
            };
            (item.symbol.clone(), mode)
        })
        .collect()
}

/// Parallel constructs under base control flow cannot be outlined in place.
fn ensure_no_parallel(region: &Region) -> Result<()> {
    let mut bad = None;
    fn go(region: &Region, bad: &mut Option<NodeId>) {
        for n in &region.nodes {
            match &n.kind {
                NodeKind::Spmd(_) | NodeKind::Task(_) | NodeKind::Sync(_) => {
                    if bad.is_none() {
                        *bad = Some(n.id);
                    }
                }
                NodeKind::Loop(l) if l.parallel.is_some()
                    && bad.is_none() => {
                        *bad = Some(n.id);
                    }
                _ => {}
            }
            for r in n.regions() {
                go(r, bad);
            }
        }
    }
    go(region, &mut bad);
    match bad {
        Some(id) => Err(err(format!(
            "parallel construct {id} nested under sequential control flow cannot be lowered"
        ))),
        None => Ok(()),
    }
}

fn err(msg: impl Into<String>) -> Diag {
    Diag::new(Pos::default(), msg)
}

// ---------------------------------------------------------------------------
// Serialization: one primitive per line
// ---------------------------------------------------------------------------

pub fn serialize_runtime_form(rf: &RuntimeForm) -> String {
    let mut out = String::from("runtime-form\n");
    for f in &rf.functions {
        let params = f.params.iter().map(|p| format!("%{}", p.name)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "func @{}({params})", f.name);
        write_items(&f.items, 1, &mut out);
        out.push_str("end\n");
    }
    for o in &rf.outlined {
        let caps = o
            .captures
            .iter()
            .map(|(s, m)| format!("%{s}: {}", m.keyword()))
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(out, "outlined @{}({caps})", o.name);
        write_items(&o.items, 1, &mut out);
        out.push_str("end\n");
    }
    out
}

fn write_items(items: &[RtItem], depth: usize, out: &mut String) {
    for item in items {
        match item {
            RtItem::Prim(p) => write_prim(p, depth, out),
            RtItem::Stmt(n) => write_stmt(n, depth, out),
        }
    }
}

fn env_text(env: &[(String, CaptureMode)]) -> String {
    env.iter().map(|(s, m)| format!("%{s}: {}", m.keyword())).collect::<Vec<_>>().join(", ")
}

fn map_text(items: &[DataItem]) -> String {
    items
        .iter()
        .map(|i| {
            format!("%{}[{}]", i.symbol, i.mapping.known().map(|m| m.property.keyword()).unwrap_or("?"))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_prim(p: &Prim, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    match p {
        Prim::ForkTeams { count, func, env } => {
            let c = count.as_ref().map(pe).unwrap_or_else(|| "default".into());
            let _ = writeln!(out, "fork_teams({c}, @{func}, env=[{}])", env_text(env));
        }
        Prim::ForkUnits { count, func, env } => {
            let c = count.as_ref().map(pe).unwrap_or_else(|| "default".into());
            let _ = writeln!(out, "fork_units({c}, @{func}, env=[{}])", env_text(env));
        }
        Prim::LaunchTask { kind, device, func, env, depend, is_async, policy, map } => {
            if !map.is_empty() {
                let _ = writeln!(out, "map_enter({})", map_text(map));
                for _ in 0..depth {
                    out.push_str("  ");
                }
            }
            let k = match kind {
                TaskKind::Plain => "plain".to_string(),
                TaskKind::Offload => format!(
                    "offload, {}",
                    device.map(|(d, i)| format!("{}:{i}", d.keyword())).unwrap_or_default()
                ),
                TaskKind::Remote => format!(
                    "remote, {}",
                    device.map(|(d, i)| format!("{}:{i}", d.keyword())).unwrap_or_default()
                ),
            };
            let dep = depend
                .iter()
                .map(|(m, s)| format!("{}:%{s}", m.keyword()))
                .collect::<Vec<_>>()
                .join(", ");
            let mut line = format!("launch_task({k}, @{func}, env=[{}], depend=[{dep}]", env_text(env));
            if *is_async {
                line.push_str(", async");
            }
            if let Some(pol) = policy {
                let _ = write!(line, ", policy={}", pol.keyword());
            }
            line.push(')');
            let _ = writeln!(out, "{line}");
            if !map.is_empty() {
                for _ in 0..depth {
                    out.push_str("  ");
                }
                let _ = writeln!(out, "map_exit({})", map_text(map));
            }
        }
        Prim::DispatchLoop { desc, body_func, induction, lower, upper, step } => {
            let d = match desc {
                LoweredSchedule::Worksharing { policy, chunk, distribute } => {
                    let c = chunk.as_ref().map(|e| format!(", {}", pe(e))).unwrap_or_default();
                    format!("schedule({}{c}) distribute({})", policy.keyword(), distribute.keyword())
                }
                LoweredSchedule::Taskloop { grainsize, num_tasks } => {
                    let mut t = String::from("taskloop");
                    if let Some(g) = grainsize {
                        let _ = write!(t, " grainsize({})", pe(g));
                    }
                    if let Some(n) = num_tasks {
                        let _ = write!(t, " num_tasks({})", pe(n));
                    }
                    t
                }
            };
            let _ = writeln!(
                out,
                "dispatch_loop(@{body_func}, induction=%{induction}, lowerBound({}), upperBound({}), step({}), {d})",
                pe(lower),
                pe(upper),
                pe(step)
            );
        }
        Prim::Barrier { implicit } => {
            let _ = writeln!(out, "barrier({})", if *implicit { "implicit" } else { "" });
        }
        Prim::Reduce { op, vars } => {
            let v = vars.iter().map(|s| format!("%{s}")).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "reduce({}, [{v}])", op.symbol());
        }
        Prim::MapEnter { space, items } => {
            let _ = writeln!(out, "map_enter({}:{}, {})", space.0.keyword(), space.1, map_text(items));
        }
        Prim::MapExit { space, items } => {
            let _ = writeln!(out, "map_exit({}:{}, {})", space.0.keyword(), space.1, map_text(items));
        }
        Prim::Alloc { symbol, size, allocator } => {
            let a = match allocator {
                AllocatorAttr::Default => "default_mem_alloc".into(),
                AllocatorAttr::LargeCap => "large_cap_mem_alloc".into(),
                AllocatorAttr::Custom(s) => format!("%{s}"),
            };
            let _ = writeln!(out, "alloc({a}, %{symbol}, size={})", pe(size));
        }
        Prim::Dealloc { symbol, deallocator } => {
            let d = match deallocator {
                DeallocatorAttr::Default => "default_mem_dealloc".into(),
                DeallocatorAttr::LargeCap => "large_cap_mem_dealloc".into(),
                DeallocatorAttr::Custom(s) => format!("%{s}"),
            };
            let _ = writeln!(out, "dealloc({d}, %{symbol})");
        }
        Prim::Memcpy { dest_space, dest, src_space, src, size, direction } => {
            let _ = writeln!(
                out,
                "memcpy({src_space}:%{src} -> {dest_space}:%{dest}, size={}, {})",
                pe(size),
                direction.keyword()
            );
        }
        Prim::Update { symbols, direction } => {
            let v = symbols.iter().map(|s| format!("%{s}")).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "update({}, [{v}])", direction.keyword());
        }
        Prim::TaskWait => {
            out.push_str("taskwait()\n");
        }
        Prim::Exclusive { name, func } => {
            let _ = writeln!(out, "exclusive({}, @{func})", name.keyword());
        }
    }
}

fn write_stmt(n: &Node, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    match &n.kind {
        NodeKind::Decl { ty, name, init } => match init {
            Some(e) => {
                let _ = writeln!(out, "stmt decl {ty} %{name} = {}", pe(e));
            }
            None => {
                let _ = writeln!(out, "stmt decl {ty} %{name}");
            }
        },
        NodeKind::Assign { base, indices, value } => {
            let mut lhs = format!("%{base}");
            for i in indices {
                let _ = write!(lhs, "[{}]", pe(i));
            }
            let _ = writeln!(out, "stmt {lhs} = {}", pe(value));
        }
        NodeKind::Call { callee, args } => {
            let a = args.iter().map(pe).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "stmt call @{callee}({a})");
        }
        NodeKind::Return(v) => match v {
            Some(e) => {
                let _ = writeln!(out, "stmt return {}", pe(e));
            }
            None => out.push_str("stmt return\n"),
        },
        NodeKind::If(i) => {
            let _ = writeln!(out, "stmt if {} {{", pe(&i.cond));
            for inner in &i.then_region.nodes {
                write_stmt(inner, depth + 1, out);
            }
            if let Some(e) = &i.else_region {
                for _ in 0..depth {
                    out.push_str("  ");
                }
                out.push_str("} else {\n");
                for inner in &e.nodes {
                    write_stmt(inner, depth + 1, out);
                }
            }
            for _ in 0..depth {
                out.push_str("  ");
            }
            out.push_str("}\n");
        }
        NodeKind::BaseFor(f) => {
            let _ = writeln!(
                out,
                "stmt for %{} = {} cond({}) step({}) {{",
                f.var,
                pe(&f.init),
                pe(&f.cond),
                pe(&f.step)
            );
            for inner in &f.body.nodes {
                write_stmt(inner, depth + 1, out);
            }
            for _ in 0..depth {
                out.push_str("  ");
            }
            out.push_str("}\n");
        }
        NodeKind::Loop(l) => {
            let _ = writeln!(
                out,
                "stmt loop %{} = {} to {} step {} {{",
                l.induction,
                pe(&l.lower),
                pe(&l.upper),
                pe(&l.step)
            );
            for inner in &l.body.nodes {
                write_stmt(inner, depth + 1, out);
            }
            for _ in 0..depth {
                out.push_str("  ");
            }
            out.push_str("}\n");
        }
        other => {
            let _ = writeln!(out, "stmt <{other:?}>");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::interp::{interpret, replay, Options, Value};
    use crate::ir::build_upir;
    use std::collections::BTreeMap;

    fn pipeline(src: &str) -> Module {
        analysis::run_all(&build_upir(&parse_kernel_source(src).unwrap()).unwrap()).unwrap()
    }

    const AXPY: &str = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma omp target parallel for num_threads(1024)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";

    #[test]
    fn axpy_lowering_shape() {
        let m = pipeline(AXPY);
        let rf = lower_to_runtime(&m).unwrap();
        let main = rf.function("axpy").unwrap();
        // launch_task at the top
        let RtItem::Prim(Prim::LaunchTask { kind, device, func, .. }) = &main.items[0] else {
            panic!("expected launch_task, got {:?}", main.items[0])
        };
        assert_eq!(*kind, TaskKind::Offload);
        assert_eq!(*device, Some((Device::Nvptx, 0)));
        // task body forks 1024 units
        let task_fn = rf.outlined_fn(func).unwrap();
        let RtItem::Prim(Prim::ForkUnits { count, func: spmd_fn, .. }) = &task_fn.items[0] else {
            panic!("expected fork_units")
        };
        assert_eq!(count.as_ref().unwrap().as_int_const(), Some(1024));
        // spmd body dispatches the loop then hits barriers
        let spmd = rf.outlined_fn(spmd_fn).unwrap();
        let kinds: Vec<&str> = spmd
            .items
            .iter()
            .map(|i| match i {
                RtItem::Prim(Prim::DispatchLoop { .. }) => "dispatch_loop",
                RtItem::Prim(Prim::Barrier { .. }) => "barrier",
                RtItem::Prim(_) => "prim",
                RtItem::Stmt(_) => "stmt",
            })
            .collect();
        assert_eq!(kinds, ["dispatch_loop", "barrier", "barrier"]);
        let RtItem::Prim(Prim::DispatchLoop {
            desc: LoweredSchedule::Worksharing { policy, .. }, ..
        }) = &spmd.items[0]
        else {
            panic!()
        };
        assert_eq!(*policy, crate::ast::SchedulePolicy::Static);
    }

    #[test]
    fn no_parallel_nodes_zero_prims() {
        let src = "void f(int y[]) {\ny[0] = 1;\ny[1] = 2;\n}";
        let m = pipeline(src);
        let rf = lower_to_runtime(&m).unwrap();
        assert_eq!(rf.prim_count(), 0);
        assert!(rf.outlined.is_empty());
        assert_eq!(rf.function("f").unwrap().items.len(), 2);
    }

    #[test]
    fn depend_carried_through() {
        let src = "\
void f(int x[]) {
  #pragma omp task depend(in: x)
  x[0] = 1;
  #pragma omp taskwait
}
";
        let m = pipeline(src);
        let rf = lower_to_runtime(&m).unwrap();
        let main = rf.function("f").unwrap();
        let RtItem::Prim(Prim::LaunchTask { depend, .. }) = &main.items[0] else { panic!() };
        assert_eq!(depend, &[(crate::ast::DependMode::In, "x".to_string())]);
    }

    #[test]
    fn captures_follow_sharing() {
        let m = pipeline(AXPY);
        let rf = lower_to_runtime(&m).unwrap();
        let main = rf.function("axpy").unwrap();
        let RtItem::Prim(Prim::LaunchTask { env, .. }) = &main.items[0] else { panic!() };
        let find = |s: &str| env.iter().find(|(n, _)| n == s).map(|(_, m)| *m);
        assert_eq!(find("x"), Some(CaptureMode::ByReference), "shared array");
        assert_eq!(find("a"), Some(CaptureMode::ByValue), "firstprivate scalar");
        assert_eq!(find("n"), Some(CaptureMode::ByValue));
    }

    #[test]
    fn serialization_one_prim_per_line() {
        let m = pipeline(AXPY);
        let rf = lower_to_runtime(&m).unwrap();
        let text = serialize_runtime_form(&rf);
        assert!(text.starts_with("runtime-form\n"), "{text}");
        assert!(text.contains("launch_task(offload, nvptx:0"), "{text}");
        assert!(text.contains("fork_units(%c1024"), "{text}");
        assert!(text.contains("dispatch_loop("), "{text}");
        assert!(text.contains("map_enter("), "{text}");
        assert!(text.contains("barrier(implicit)"), "{text}");
    }

    fn farr(xs: &[f64]) -> Value {
        Value::FloatArr { dims: vec![xs.len()], data: xs.to_vec() }
    }

    #[test]
    fn replay_matches_interpreter_axpy() {
        let m = pipeline(AXPY);
        let rf = lower_to_runtime(&m).unwrap();
        let inputs = BTreeMap::from([
            ("x".to_string(), farr(&[1.0, 2.0, 3.0, 4.0])),
            ("y".to_string(), farr(&[1.0, 1.0, 1.0, 1.0])),
            ("a".to_string(), Value::Float(2.0)),
            ("n".to_string(), Value::Int(4)),
        ]);
        for p in [1u32, 3, 8] {
            let opts = Options { units_override: Some(p), ..Options::default() };
            let direct = interpret(&m, "axpy", &inputs, &opts).unwrap();
            let replayed = replay(&m, &rf, "axpy", &inputs, &opts).unwrap();
            assert_eq!(direct.buffers, replayed.buffers, "p={p}");
        }
    }

    #[test]
    fn replay_matches_interpreter_reduction() {
        let src = "\
void sumto(int r[], int n) {
  int sum = 0;
  #pragma omp parallel for reduction(+: sum) num_threads(3)
  for (int i = 1; i <= n; i++)
    sum += i;
  r[0] = sum;
}
";
        let m = pipeline(src);
        let rf = lower_to_runtime(&m).unwrap();
        let inputs = BTreeMap::from([
            ("r".to_string(), Value::IntArr { dims: vec![1], data: vec![0] }),
            ("n".to_string(), Value::Int(10)),
        ]);
        for p in [1u32, 2, 3, 8] {
            let opts = Options { units_override: Some(p), ..Options::default() };
            let direct = interpret(&m, "sumto", &inputs, &opts).unwrap();
            let replayed = replay(&m, &rf, "sumto", &inputs, &opts).unwrap();
            assert_eq!(direct.buffers, replayed.buffers, "p={p}");
            assert_eq!(replayed.buffers["r"], Value::IntArr { dims: vec![1], data: vec![55] });
        }
    }
}
