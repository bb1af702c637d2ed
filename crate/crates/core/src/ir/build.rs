//! Building UPIR from an annotated kernel program.
//!
//! Each source model maps onto the same node set:
//!   OpenMP  target -> offload task; teams/parallel -> spmd (merged to one
//!           spmd when combined in a single directive); for/distribute/simd/
//!           taskloop -> loop + loop-parallel; task -> plain task;
//!           barrier/critical/atomic/single -> sync; target data -> data
//!           region; target update -> data update.
//!   OpenACC parallel -> offload task + spmd (num_gangs/num_workers);
//!           loop gang/worker/vector -> loop-parallel; copyin/copyout/copy/
//!           create -> mapping attributes; data -> data region; update ->
//!           data update; wait -> taskwait sync; async -> async task.
//!   CUDA    chevron launch -> offload task enclosing exactly one spmd whose
//!           body is the kernel call.

use crate::ast::*;
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::BTreeMap;

/// Build result plus non-fatal warnings (clause tie-breaks and the like).
#[derive(Debug)]
pub struct Built {
    pub module: Module,
    pub warnings: Vec<String>,
}

/// Map an annotated program onto UPIR and validate the structure.
pub fn build_upir(program: &Program) -> Result<Module> {
    Ok(build(program)?.module)
}

pub fn build(program: &Program) -> Result<Built> {
    let mut b = Builder { next_id: 0, warnings: Vec::new() };
    let mut module = Module::default();
    for f in &program.functions {
        let body = b.build_region(&f.body)?;
        module.functions.push(UpirFunction {
            name: f.name.clone(),
            params: f.params.clone(),
            ret: f.ret,
            is_kernel: f.is_kernel,
            body,
        });
    }
    canon::validate(&module)?;
    Ok(Built { module, warnings: b.warnings })
}

struct Builder {
    next_id: u32,
    warnings: Vec<String>,
}

impl Builder {
    fn fresh(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn node(&mut self, kind: NodeKind) -> Node {
        Node { id: self.fresh(), kind }
    }

    fn build_region(&mut self, stmts: &[Stmt]) -> Result<Region> {
        let mut nodes = Vec::new();
        for s in stmts {
            self.build_annotated(&s.directives, s, &mut nodes)?;
        }
        Ok(Region::new(nodes))
    }

    fn build_annotated(&mut self, ds: &[Directive], stmt: &Stmt, out: &mut Vec<Node>) -> Result<()> {
        let Some(d) = ds.first() else {
            return self.build_plain(stmt, out);
        };
        if d.source_language == SourceLanguage::CudaLaunch {
            return self.build_launch(d, stmt, out);
        }
        let produced_at = out.len();
        self.build_constructs(d, 0, false, &ds[1..], stmt, out)?;
        self.attach_extensions(d, produced_at, out);
        Ok(())
    }

    /// Lower constructs[ci..], wrapping the remaining directives and the
    /// statement innermost. `skip_parallel` is set when a preceding `teams`
    /// already absorbed the combined `parallel`.
    fn build_constructs(
        &mut self,
        d: &Directive,
        ci: usize,
        skip_parallel: bool,
        rest: &[Directive],
        stmt: &Stmt,
        out: &mut Vec<Node>,
    ) -> Result<()> {
        let Some(&c) = d.constructs.get(ci) else {
            return self.build_annotated(rest, stmt, out);
        };
        match c {
            Construct::Target => {
                match d.constructs.get(ci + 1) {
                    Some(Construct::Data) => {
                        let body = self.sub_region(d, ci + 2, false, rest, stmt)?;
                        let data = self.explicit_mapping_items(d)?;
                        out.push(self.node(NodeKind::DataRegion(DataRegionNode { data, body })));
                    }
                    Some(Construct::Update) => self.build_update(d, out)?,
                    _ => {
                        let body = self.sub_region(d, ci + 1, skip_parallel, rest, stmt)?;
                        out.push(self.offload_task(d, body)?);
                    }
                }
                Ok(())
            }
            Construct::Teams => {
                let absorbs = d.constructs[ci + 1..].contains(&Construct::Parallel);
                let body = self.sub_region(d, ci + 1, absorbs, rest, stmt)?;
                let mut spmd = self.spmd_from_clauses(d, stmt.pos)?;
                spmd.num_teams = find_num_teams(d);
                if !absorbs {
                    spmd.num_units = None;
                }
                spmd.body = body;
                self.finish_spmd(spmd, out)
            }
            Construct::Parallel if skip_parallel => self.build_constructs(d, ci + 1, false, rest, stmt, out),
            Construct::Parallel => {
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                let mut spmd = self.spmd_from_clauses(d, stmt.pos)?;
                spmd.body = body;
                if d.source_language == SourceLanguage::OpenAcc {
                    // acc parallel is an offloading construct in itself.
                    spmd.num_teams = find_num_teams(d);
                    spmd.targets = vec![TargetPlatform::Gpu];
                    let mut nodes = Vec::new();
                    self.finish_spmd(spmd, &mut nodes)?;
                    for c in &d.clauses {
                        if let Clause::WaitClause(_) = c {
                            out.push(self.sync_node(SyncName::Taskwait, false, None));
                        }
                    }
                    out.push(self.offload_task(d, Region::new(nodes))?);
                    Ok(())
                } else {
                    self.finish_spmd(spmd, out)
                }
            }
            Construct::For
            | Construct::Distribute
            | Construct::Simd
            | Construct::Taskloop
            | Construct::Loop => self.build_loop_nest(d, ci, stmt, out),
            Construct::Task => {
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                let mut task = TaskNode { body, ..TaskNode::default() };
                self.apply_task_clauses(d, &mut task, stmt.pos)?;
                task.sync = direct_sync_ids(&task.body);
                out.push(self.node(NodeKind::Task(task)));
                Ok(())
            }
            Construct::Barrier => {
                out.push(self.sync_node(SyncName::Barrier, false, None));
                Ok(())
            }
            Construct::Taskwait | Construct::Wait => {
                out.push(self.sync_node(SyncName::Taskwait, false, None));
                Ok(())
            }
            Construct::Critical => {
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                let mut n = self.sync_node(SyncName::Critical, false, Some(body));
                if let (NodeKind::Sync(s), Some(name)) = (&mut n.kind, &d.construct_arg) {
                    s.data.push(name.clone());
                }
                out.push(n);
                Ok(())
            }
            Construct::Atomic => {
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                out.push(self.sync_node(SyncName::Atomic, false, Some(body)));
                Ok(())
            }
            Construct::Single => {
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                let mut n = self.sync_node(SyncName::Single, false, Some(body));
                if let NodeKind::Sync(s) = &mut n.kind {
                    s.primary = SyncUnit::thread(0);
                }
                out.push(n);
                Ok(())
            }
            Construct::Data => {
                // OpenACC structured data region (OpenMP arrives as target data).
                let body = self.sub_region(d, ci + 1, false, rest, stmt)?;
                let data = self.explicit_mapping_items(d)?;
                out.push(self.node(NodeKind::DataRegion(DataRegionNode { data, body })));
                Ok(())
            }
            Construct::Update => self.build_update(d, out),
        }
    }

    fn sub_region(
        &mut self,
        d: &Directive,
        ci: usize,
        skip_parallel: bool,
        rest: &[Directive],
        stmt: &Stmt,
    ) -> Result<Region> {
        let mut nodes = Vec::new();
        self.build_constructs(d, ci, skip_parallel, rest, stmt, &mut nodes)?;
        Ok(Region::new(nodes))
    }

    fn finish_spmd(&mut self, mut spmd: SpmdNode, out: &mut Vec<Node>) -> Result<()> {
        spmd.sync = direct_sync_ids(&spmd.body);
        out.push(self.node(NodeKind::Spmd(spmd)));
        Ok(())
    }

    fn spmd_from_clauses(&mut self, d: &Directive, pos: Pos) -> Result<SpmdNode> {
        let mut spmd = SpmdNode { targets: vec![TargetPlatform::Cpu], ..SpmdNode::default() };
        if d.has_construct(Construct::Target) {
            spmd.targets = vec![TargetPlatform::Gpu];
        }
        for c in &d.clauses {
            match c {
                Clause::NumThreads(e) | Clause::NumWorkers(e) => spmd.num_units = Some(e.clone()),
                Clause::Private(v) => apply_sharing(&mut spmd.data, v, SharingProp::Private, pos)?,
                Clause::Firstprivate(v) => apply_sharing(&mut spmd.data, v, SharingProp::Firstprivate, pos)?,
                Clause::Shared(v) => apply_sharing(&mut spmd.data, v, SharingProp::Shared, pos)?,
                _ => {}
            }
        }
        // Reductions bind to the loop when one is present in the directive.
        if !d.constructs.iter().any(|c| c.is_loop_binding()) {
            for c in &d.clauses {
                if let Clause::Reduction { op, vars } = c {
                    let node = self.reduction_sync(*op, vars, &mut spmd.data, pos)?;
                    spmd.sync.push(node.id);
                    spmd.body.nodes.push(node);
                }
            }
        }
        Ok(spmd)
    }

    fn offload_task(&mut self, d: &Directive, body: Region) -> Result<Node> {
        let mut task = TaskNode {
            kind: TaskKind::Offload,
            device: Some((Device::Nvptx, 0)),
            body,
            ..TaskNode::default()
        };
        self.apply_task_clauses(d, &mut task, d.pos)?;
        task.sync = direct_sync_ids(&task.body);
        Ok(self.node(NodeKind::Task(task)))
    }

    fn apply_task_clauses(&mut self, d: &Directive, task: &mut TaskNode, pos: Pos) -> Result<()> {
        for c in &d.clauses {
            match c {
                Clause::Map { kind, vars } => {
                    apply_mapping(&mut task.data, vars, map_prop(*kind), pos)?;
                }
                Clause::Copyin(v) => apply_mapping(&mut task.data, v, MappingProp::To, pos)?,
                Clause::Copyout(v) => apply_mapping(&mut task.data, v, MappingProp::From, pos)?,
                Clause::Copy(v) => apply_mapping(&mut task.data, v, MappingProp::ToFrom, pos)?,
                Clause::Create(v) => apply_mapping(&mut task.data, v, MappingProp::Allocate, pos)?,
                Clause::Depend { mode, vars } => {
                    for v in vars {
                        task.depend.push((*mode, v.clone()));
                    }
                }
                Clause::Device(e) => {
                    let id = e.as_int_const().ok_or_else(|| {
                        Diag::new(pos, "device clause argument must be an integer constant")
                    })?;
                    task.device = Some((Device::Nvptx, id));
                    if task.kind == TaskKind::Plain {
                        task.kind = TaskKind::Offload;
                    }
                }
                Clause::Policy(p) => task.policy = Some(*p),
                Clause::Async(_) => task.is_async = true,
                Clause::Nowait if d.has_construct(Construct::Target) => task.is_async = true,
                Clause::Private(v) if !has_spmd_construct(d) => {
                    apply_sharing(&mut task.data, v, SharingProp::Private, pos)?;
                }
                Clause::Firstprivate(v) if !has_spmd_construct(d) => {
                    apply_sharing(&mut task.data, v, SharingProp::Firstprivate, pos)?;
                }
                Clause::Shared(v) if !has_spmd_construct(d) => {
                    apply_sharing(&mut task.data, v, SharingProp::Shared, pos)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Build a canonical loop plus its parallelization annotation from the
    /// loop-binding constructs at `d.constructs[ci..]`.
    fn build_loop_nest(&mut self, d: &Directive, ci: usize, stmt: &Stmt, out: &mut Vec<Node>) -> Result<()> {
        let StmtKind::For(f) = &stmt.kind else {
            return Err(Diag::new(stmt.pos, "loop directive must be attached to a for-loop"));
        };
        let loop_constructs: Vec<Construct> = d.constructs[ci..]
            .iter()
            .copied()
            .filter(|c| c.is_loop_binding())
            .collect();
        let parallel = self.loop_parallelization(d, &loop_constructs, stmt.pos)?;
        let mut node = self.build_for(f, stmt.pos)?;
        let NodeKind::Loop(l) = &mut node.kind else { unreachable!() };
        l.parallel = parallel;
        for c in &d.clauses {
            match c {
                Clause::Collapse(n) => l.collapse = *n,
                Clause::Nowait if !d.has_construct(Construct::Target) => l.nowait = true,
                Clause::Private(v) => apply_sharing(&mut l.data, v, SharingProp::Private, stmt.pos)?,
                Clause::Firstprivate(v) => apply_sharing(&mut l.data, v, SharingProp::Firstprivate, stmt.pos)?,
                Clause::Lastprivate(v) => apply_sharing(&mut l.data, v, SharingProp::Lastprivate, stmt.pos)?,
                Clause::Shared(v) => apply_sharing(&mut l.data, v, SharingProp::Shared, stmt.pos)?,
                _ => {}
            }
        }
        let mut reductions = Vec::new();
        for c in &d.clauses {
            if let Clause::Reduction { op, vars } = c {
                let n = self.reduction_sync(*op, vars, &mut l.data, stmt.pos)?;
                l.sync.push(n.id);
                reductions.push(n);
            }
        }
        out.push(node);
        out.extend(reductions);
        Ok(())
    }

    fn loop_parallelization(
        &mut self,
        d: &Directive,
        constructs: &[Construct],
        pos: Pos,
    ) -> Result<Option<LoopParallel>> {
        let has = |c: Construct| constructs.contains(&c);
        let gang = d.clauses.contains(&Clause::Gang);
        let worker = d.clauses.contains(&Clause::Worker);
        let vector = d.clauses.contains(&Clause::Vector);
        let kind = if has(Construct::Taskloop) {
            let mut grainsize = None;
            let mut num_tasks = None;
            for c in &d.clauses {
                match c {
                    Clause::Grainsize(e) => grainsize = Some(e.clone()),
                    Clause::NumTasks(e) => num_tasks = Some(e.clone()),
                    _ => {}
                }
            }
            if grainsize.is_some() && num_tasks.is_some() {
                self.warnings.push(format!(
                    "{pos}: warning: both grainsize and num_tasks given; num_tasks wins"
                ));
                grainsize = None;
            }
            LoopParKind::Taskloop { grainsize, num_tasks }
        } else if has(Construct::For) || has(Construct::Distribute) || (has(Construct::Loop) && !(vector && !gang && !worker)) {
            let distribute = if has(Construct::Loop) {
                match (gang, worker) {
                    (true, true) => DistributeTarget::TeamsUnits,
                    (true, false) => DistributeTarget::Teams,
                    (false, true) => DistributeTarget::Units,
                    // bare `acc loop` distributes over the workers
                    (false, false) => DistributeTarget::Units,
                }
            } else {
                match (has(Construct::Distribute), has(Construct::For)) {
                    (true, true) => DistributeTarget::TeamsUnits,
                    (true, false) => DistributeTarget::Teams,
                    _ => DistributeTarget::Units,
                }
            };
            if has(Construct::Simd) || vector {
                self.warnings.push(format!(
                    "{pos}: warning: combined worksharing+simd keeps worksharing only"
                ));
            }
            let mut schedule = SchedulePolicy::Static;
            let mut chunk = None;
            for c in &d.clauses {
                if let Clause::Schedule { policy, chunk: ch } = c {
                    schedule = *policy;
                    chunk = ch.clone();
                }
            }
            LoopParKind::Worksharing { schedule, chunk, distribute }
        } else if has(Construct::Simd) || (has(Construct::Loop) && vector) {
            let mut simdlen = Expr::IntLit(1);
            for c in &d.clauses {
                match c {
                    Clause::Simdlen(e) | Clause::VectorLength(e) => simdlen = e.clone(),
                    _ => {}
                }
            }
            LoopParKind::Simd { simdlen }
        } else {
            return Ok(None);
        };
        Ok(Some(LoopParallel { kind }))
    }

    fn reduction_sync(
        &mut self,
        op: ReductionOp,
        vars: &[VarRef],
        data: &mut Vec<DataItem>,
        pos: Pos,
    ) -> Result<Node> {
        apply_sharing(data, vars, SharingProp::Private, pos)?;
        Ok(self.node(NodeKind::Sync(SyncNode {
            name: SyncName::Reduction,
            mode: SyncMode::Sync,
            primary: SyncUnit::thread(0),
            secondary: SyncUnit::all_threads(),
            operation: Some(op),
            data: vars.iter().map(|v| v.name.clone()).collect(),
            implicit: false,
            body: None,
        })))
    }

    fn explicit_mapping_items(&mut self, d: &Directive) -> Result<Vec<DataItem>> {
        let mut items = Vec::new();
        for c in &d.clauses {
            match c {
                Clause::Map { kind, vars } => apply_mapping(&mut items, vars, map_prop(*kind), d.pos)?,
                Clause::Copyin(v) => apply_mapping(&mut items, v, MappingProp::To, d.pos)?,
                Clause::Copyout(v) => apply_mapping(&mut items, v, MappingProp::From, d.pos)?,
                Clause::Copy(v) => apply_mapping(&mut items, v, MappingProp::ToFrom, d.pos)?,
                Clause::Create(v) => apply_mapping(&mut items, v, MappingProp::Allocate, d.pos)?,
                _ => {}
            }
        }
        Ok(items)
    }

    fn build_update(&mut self, d: &Directive, out: &mut Vec<Node>) -> Result<()> {
        for c in &d.clauses {
            let (vars, direction) = match c {
                Clause::UpdateTo(v) => (v, Direction::Forward),
                Clause::UpdateFrom(v) => (v, Direction::Backward),
                _ => continue,
            };
            out.push(self.node(NodeKind::DataUpdate(DataUpdateNode {
                data: vars.iter().map(|v| v.name.clone()).collect(),
                direction,
                memcpy: MemcpyAttr::Default,
                depend: Vec::new(),
            })));
        }
        Ok(())
    }

    fn build_launch(&mut self, d: &Directive, stmt: &Stmt, out: &mut Vec<Node>) -> Result<()> {
        let StmtKind::Call { callee, args, .. } = &stmt.kind else {
            return Err(Diag::new(stmt.pos, "cuda-launch directive must be attached to a call"));
        };
        let (grid, block) = d.launch_config.clone().ok_or_else(|| Diag::new(stmt.pos, "missing launch config"))?;
        let call = self.node(NodeKind::Call { callee: callee.clone(), args: args.clone() });
        let spmd = self.node(NodeKind::Spmd(SpmdNode {
            targets: vec![TargetPlatform::Gpu],
            num_teams: Some(grid),
            num_units: Some(block),
            body: Region::new(vec![call]),
            ..SpmdNode::default()
        }));
        let task = self.node(NodeKind::Task(TaskNode {
            kind: TaskKind::Offload,
            device: Some((Device::Nvptx, 0)),
            is_async: true,
            body: Region::new(vec![spmd]),
            ..TaskNode::default()
        }));
        out.push(task);
        Ok(())
    }

    fn sync_node(&mut self, name: SyncName, implicit: bool, body: Option<Region>) -> Node {
        self.node(NodeKind::Sync(SyncNode {
            name,
            mode: SyncMode::Sync,
            primary: SyncUnit::all_threads(),
            secondary: SyncUnit::all_threads(),
            operation: None,
            data: Vec::new(),
            implicit,
            body,
        }))
    }

    fn attach_extensions(&mut self, d: &Directive, produced_at: usize, out: &mut Vec<Node>) {
        let mut entries = BTreeMap::new();
        for c in &d.clauses {
            if let Clause::Extension { name, payload } = c {
                entries.insert(name.clone(), ExtValue::Str(payload.clone().unwrap_or_default()));
            }
        }
        if entries.is_empty() || produced_at >= out.len() {
            return;
        }
        let ext = self.node(NodeKind::Ext(ExtensionNode { entries }));
        let first = &mut out[produced_at];
        match first.regions_mut().into_iter().next() {
            Some(region) => region.nodes.insert(0, ext),
            None => out.insert(produced_at, ext),
        }
    }

    // ---- plain statements -------------------------------------------------

    fn build_plain(&mut self, stmt: &Stmt, out: &mut Vec<Node>) -> Result<()> {
        match &stmt.kind {
            StmtKind::Decl { ty, name, init } => {
                out.push(self.node(NodeKind::Decl { ty: *ty, name: name.clone(), init: init.clone() }));
            }
            StmtKind::Assign { lhs, rhs } => {
                out.push(self.node(NodeKind::Assign {
                    base: lhs.base.clone(),
                    indices: lhs.indices.clone(),
                    value: rhs.clone(),
                }));
            }
            StmtKind::For(f) => {
                let node = self.build_for(f, stmt.pos)?;
                out.push(node);
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let then_region = self.build_region(std::slice::from_ref(then_branch))?;
                let else_region = match else_branch {
                    Some(e) => Some(self.build_region(std::slice::from_ref(e))?),
                    None => None,
                };
                out.push(self.node(NodeKind::If(IfNode { cond: cond.clone(), then_region, else_region })));
            }
            StmtKind::Block(stmts) => {
                // Blocks flatten into the enclosing region.
                for s in stmts {
                    self.build_annotated(&s.directives, s, out)?;
                }
            }
            StmtKind::Call { callee, args, launch } => {
                if launch.is_some() {
                    return Err(Diag::new(stmt.pos, "unattached launch call"));
                }
                out.push(self.node(NodeKind::Call { callee: callee.clone(), args: args.clone() }));
            }
            StmtKind::Return(v) => out.push(self.node(NodeKind::Return(v.clone()))),
            StmtKind::Empty => {}
        }
        Ok(())
    }

    /// Canonical loops normalize to `lower <= i < upper` with positive step;
    /// anything else is carried through in source form.
    fn build_for(&mut self, f: &ForStmt, pos: Pos) -> Result<Node> {
        let body = self.build_region(std::slice::from_ref(&f.body))?;
        let Some((cmp, bound)) = f.canonical_cmp() else {
            return Ok(self.node(NodeKind::BaseFor(BaseForNode {
                var: f.var.clone(),
                declares: f.declares,
                init: f.init.clone(),
                cond: f.cond.clone(),
                step: f.step.clone(),
                body,
            })));
        };
        let Some(step) = f.step.as_int_const() else {
            return Ok(self.node(NodeKind::BaseFor(BaseForNode {
                var: f.var.clone(),
                declares: f.declares,
                init: f.init.clone(),
                cond: f.cond.clone(),
                step: f.step.clone(),
                body,
            })));
        };
        if step == 0 {
            return Err(Diag::new(pos, "loop step must be nonzero"));
        }
        let increasing = matches!(cmp, BinOp::Lt | BinOp::Le);
        if increasing != (step > 0) {
            return Err(Diag::new(pos, "loop step direction disagrees with its condition"));
        }
        let (lower, upper, step) = if increasing {
            let upper = match cmp {
                BinOp::Lt => bound.clone(),
                // `<=` becomes `<` by extending the bound past the last value.
                BinOp::Le => Expr::bin(BinOp::Add, bound.clone(), Expr::IntLit(step)).fold(),
                _ => unreachable!(),
            };
            (f.init.clone(), upper, step)
        } else {
            // Decreasing loops flip to the same ascending iteration set.
            let s = -step;
            let excl = match cmp {
                BinOp::Gt => bound.clone(),
                BinOp::Ge => Expr::bin(BinOp::Sub, bound.clone(), Expr::IntLit(1)).fold(),
                _ => unreachable!(),
            };
            let trips = Expr::bin(
                BinOp::Div,
                Expr::bin(
                    BinOp::Add,
                    Expr::bin(BinOp::Sub, f.init.clone(), excl),
                    Expr::IntLit(s - 1),
                ),
                Expr::IntLit(s),
            );
            let lower = Expr::bin(
                BinOp::Sub,
                f.init.clone(),
                Expr::bin(BinOp::Mul, Expr::bin(BinOp::Sub, trips, Expr::IntLit(1)), Expr::IntLit(s)),
            )
            .fold();
            let upper = Expr::bin(BinOp::Add, f.init.clone(), Expr::IntLit(1)).fold();
            (lower, upper, s)
        };
        Ok(self.node(NodeKind::Loop(LoopNode {
            induction: f.var.clone(),
            lower,
            upper,
            step: Expr::IntLit(step),
            data: Vec::new(),
            collapse: 1,
            sync: Vec::new(),
            nowait: false,
            parallel: None,
            body,
        })))
    }
}

fn has_spmd_construct(d: &Directive) -> bool {
    d.constructs.iter().any(|c| matches!(c, Construct::Parallel | Construct::Teams))
}

fn find_num_teams(d: &Directive) -> Option<Expr> {
    d.clauses.iter().find_map(|c| match c {
        Clause::NumTeams(e) | Clause::NumGangs(e) => Some(e.clone()),
        _ => None,
    })
}

fn map_prop(kind: MapKind) -> MappingProp {
    match kind {
        MapKind::To => MappingProp::To,
        MapKind::From => MappingProp::From,
        MapKind::ToFrom => MappingProp::ToFrom,
        MapKind::Alloc => MappingProp::Allocate,
    }
}

fn direct_sync_ids(region: &Region) -> Vec<NodeId> {
    region
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Sync(_)))
        .map(|n| n.id)
        .collect()
}

fn data_item_mut<'v>(items: &'v mut Vec<DataItem>, symbol: &str) -> &'v mut DataItem {
    if let Some(i) = items.iter().position(|it| it.symbol == symbol) {
        return &mut items[i];
    }
    items.push(DataItem::unknown(symbol));
    items.last_mut().unwrap()
}

fn apply_sharing(items: &mut Vec<DataItem>, vars: &[VarRef], prop: SharingProp, pos: Pos) -> Result<()> {
    for v in vars {
        let item = data_item_mut(items, &v.name);
        if let FieldState::Known(s) = &item.sharing {
            if s.visibility == Visibility::Explicit && s.property != prop {
                return Err(Diag::new(
                    pos,
                    format!(
                        "`{}` has contradictory explicit sharing attributes ({} vs {})",
                        v.name,
                        s.property.keyword(),
                        prop.keyword()
                    ),
                ));
            }
        }
        item.sharing = FieldState::Known(Sharing { property: prop, visibility: Visibility::Explicit });
        apply_sections(item, v);
    }
    Ok(())
}

fn apply_mapping(items: &mut Vec<DataItem>, vars: &[VarRef], prop: MappingProp, pos: Pos) -> Result<()> {
    for v in vars {
        let item = data_item_mut(items, &v.name);
        if let FieldState::Known(m) = &item.mapping {
            if m.visibility == Visibility::Explicit && m.property != prop {
                return Err(Diag::new(
                    pos,
                    format!(
                        "`{}` has contradictory explicit mapping attributes ({} vs {})",
                        v.name,
                        m.property.keyword(),
                        prop.keyword()
                    ),
                ));
            }
        }
        item.mapping =
            FieldState::Known(Mapping { property: prop, visibility: Visibility::Explicit, mapper: None });
        apply_sections(item, v);
    }
    Ok(())
}

fn apply_sections(item: &mut DataItem, v: &VarRef) {
    if v.sections.is_empty() {
        return;
    }
    item.distribution = FieldState::Known(Distribution {
        unit_id: None,
        pattern: DistributionPattern::Block,
        section: v.sections.clone(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;

    #[test]
    fn contradictory_explicit_sharing_rejected() {
        let src = "\
void f(int y[], int n) {
  int s = 0;
  #pragma omp parallel private(s) shared(s)
  y[0] = s;
}
";
        let err = build_upir(&parse_kernel_source(src).unwrap()).unwrap_err();
        assert!(err.msg.contains("contradictory"), "{err}");
    }

    #[test]
    fn worksharing_without_spmd_rejected() {
        let src = "\
void f(int y[], int n) {
  #pragma omp for
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let err = build_upir(&parse_kernel_source(src).unwrap()).unwrap_err();
        assert!(err.msg.contains("SPMD"), "{err}");
    }

    #[test]
    fn grainsize_and_num_tasks_tie_break() {
        let src = "\
void f(int y[], int n) {
  #pragma omp taskloop grainsize(2) num_tasks(4)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let built = build(&parse_kernel_source(src).unwrap()).unwrap();
        assert_eq!(built.warnings.len(), 1);
        assert!(built.warnings[0].contains("num_tasks wins"), "{:?}", built.warnings);
        let mut found = false;
        built.module.walk(&mut |n| {
            if let NodeKind::Loop(l) = &n.kind {
                let Some(LoopParallel { kind: LoopParKind::Taskloop { grainsize, num_tasks } }) =
                    &l.parallel
                else {
                    panic!()
                };
                assert!(grainsize.is_none());
                assert_eq!(num_tasks.as_ref().unwrap().as_int_const(), Some(4));
                found = true;
            }
        });
        assert!(found);
    }

    #[test]
    fn standalone_directives_build_in_place() {
        let src = "\
void f(float x[], int n) {
  #pragma omp target data map(to: x[0:n])
  {
    #pragma omp target update from(x)
    #pragma omp taskwait
  }
  #pragma omp barrier
}
";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let kinds: Vec<&str> = m.functions[0]
            .body
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::DataRegion(_) => "data",
                NodeKind::Sync(_) => "sync",
                _ => "?",
            })
            .collect();
        assert_eq!(kinds, ["data", "sync"]);
        let NodeKind::DataRegion(d) = &m.functions[0].body.nodes[0].kind else { panic!() };
        let inner: Vec<&str> = d
            .body
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::DataUpdate(u) if u.direction == Direction::Backward => "update-back",
                NodeKind::Sync(s) if s.name == SyncName::Taskwait => "taskwait",
                _ => "?",
            })
            .collect();
        assert_eq!(inner, ["update-back", "taskwait"]);
    }
}
