//! Cross-unparsing: UPIR back to annotated kernel-language source.
//!
//! The emitted pragmas are canonical and minimal (no redundant defaults), so
//! rebuilding the emitted source yields a UPIR that canonically prints
//! byte-identical to the input module. Implicit attributes, implicit
//! barriers, and nesting annotations are not emitted; the rebuild pipeline
//! re-derives them.

use crate::ast::{Expr, SchedulePolicy};
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::HashSet;
use std::fmt::Write;

type Emitted = HashSet<NodeId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetModel {
    OpenMp,
    OpenAcc,
}

pub fn unparse_to_openmp(module: &Module) -> Result<String> {
    Unparser::new(module, TargetModel::OpenMp).run()
}

pub fn unparse_to_openacc(module: &Module) -> Result<String> {
    Unparser::new(module, TargetModel::OpenAcc).run()
}

struct Unparser<'m> {
    module: &'m Module,
    model: TargetModel,
    out: String,
    /// Nodes re-derived on rebuild: implicit syncs and clause-origin
    /// reductions.
    skip: HashSet<NodeId>,
}

impl<'m> Unparser<'m> {
    fn new(module: &'m Module, model: TargetModel) -> Self {
        let mut skip = HashSet::new();
        module.walk(&mut |n| {
            match &n.kind {
                NodeKind::Sync(s) if s.implicit => {
                    skip.insert(n.id);
                }
                _ => {}
            }
            let sync_list = match &n.kind {
                NodeKind::Spmd(s) => Some(&s.sync),
                NodeKind::Loop(l) => Some(&l.sync),
                _ => None,
            };
            if let Some(list) = sync_list {
                for id in list {
                    if let Some(Node { kind: NodeKind::Sync(s), .. }) = module.find_node(*id) {
                        if s.name == SyncName::Reduction {
                            skip.insert(*id);
                        }
                    }
                }
            }
        });
        Unparser { module, model, out: String::new(), skip }
    }

    fn run(mut self) -> Result<String> {
        for f in &self.module.functions {
            let params = f
                .params
                .iter()
                .map(|p| {
                    let mut t = format!("{} {}", p.ty.elem, p.name);
                    for _ in 0..p.ty.rank {
                        t.push_str("[]");
                    }
                    t
                })
                .collect::<Vec<_>>()
                .join(", ");
            let ret = match f.ret {
                Some(t) => t.to_string(),
                None => "void".into(),
            };
            let kernel = if f.is_kernel { "__global__ " } else { "" };
            let _ = writeln!(self.out, "{kernel}{ret} {}({params}) {{", f.name);
            self.emit_region(&f.body, 1)?;
            self.out.push_str("}\n");
        }
        Ok(self.out)
    }

    fn pad(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn emit_region(&mut self, region: &Region, depth: usize) -> Result<()> {
        for node in &region.nodes {
            if self.skip.contains(&node.id) {
                continue;
            }
            self.emit_node(node, depth)?;
        }
        Ok(())
    }

    fn unrepresentable(&self, node: &Node, what: &str) -> Diag {
        let model = match self.model {
            TargetModel::OpenMp => "OpenMP",
            TargetModel::OpenAcc => "OpenACC",
        };
        Diag::new(Pos::default(), format!("node {} ({what}) is not representable in {model}", node.id))
    }

    fn emit_node(&mut self, node: &Node, depth: usize) -> Result<()> {
        match &node.kind {
            NodeKind::Task(t) => self.emit_group(node, Some(t), depth),
            NodeKind::Spmd(_) => self.emit_group(node, None, depth),
            NodeKind::Loop(l) => {
                if l.parallel.is_some() {
                    self.emit_group(node, None, depth)
                } else {
                    self.emit_for(l, depth)
                }
            }
            NodeKind::DataRegion(d) => {
                let mut parts = PragmaParts::new(self.model);
                match self.model {
                    TargetModel::OpenMp => parts.constructs.push("target data".into()),
                    TargetModel::OpenAcc => parts.constructs.push("data".into()),
                }
                self.mapping_clauses(&d.data, &mut parts);
                self.emit_pragma(&parts, depth);
                self.emit_block(&d.body, depth)
            }
            NodeKind::DataUpdate(u) => {
                let list = u.data.join(", ");
                let clause = match (self.model, u.direction) {
                    (TargetModel::OpenMp, Direction::Forward) => format!("to({list})"),
                    (TargetModel::OpenMp, Direction::Backward) => format!("from({list})"),
                    (TargetModel::OpenAcc, Direction::Forward) => format!("device({list})"),
                    (TargetModel::OpenAcc, Direction::Backward) => format!("self({list})"),
                };
                self.pad(depth);
                let head = match self.model {
                    TargetModel::OpenMp => "#pragma omp target update",
                    TargetModel::OpenAcc => "#pragma acc update",
                };
                let _ = writeln!(self.out, "{head} {clause}");
                Ok(())
            }
            NodeKind::Sync(s) => self.emit_sync(node, s, depth),
            NodeKind::Ext(_) => Err(self.unrepresentable(node, "detached extension node")),
            NodeKind::DataMovement(_) => Err(self.unrepresentable(node, "explicit data movement")),
            NodeKind::MmAlloc(_) | NodeKind::MmDealloc(_) => {
                Err(self.unrepresentable(node, "explicit memory management"))
            }
            NodeKind::If(i) => {
                self.pad(depth);
                let _ = writeln!(self.out, "if ({}) {{", i.cond);
                self.emit_region(&i.then_region, depth + 1)?;
                self.pad(depth);
                match &i.else_region {
                    Some(e) => {
                        self.out.push_str("} else {\n");
                        self.emit_region(e, depth + 1)?;
                        self.pad(depth);
                        self.out.push_str("}\n");
                    }
                    None => self.out.push_str("}\n"),
                }
                Ok(())
            }
            NodeKind::BaseFor(f) => {
                self.pad(depth);
                let decl = if f.declares { "int " } else { "" };
                let _ = writeln!(
                    self.out,
                    "for ({decl}{} = {}; {}; {}) {{",
                    f.var,
                    f.init,
                    f.cond,
                    incr_text(&f.var, &f.step)
                );
                self.emit_region(&f.body, depth + 1)?;
                self.pad(depth);
                self.out.push_str("}\n");
                Ok(())
            }
            NodeKind::Decl { ty, name, init } => {
                self.pad(depth);
                match init {
                    Some(e) => {
                        let _ = writeln!(self.out, "{ty} {name} = {e};");
                    }
                    None => {
                        let _ = writeln!(self.out, "{ty} {name};");
                    }
                }
                Ok(())
            }
            NodeKind::Assign { base, indices, value } => {
                self.pad(depth);
                let mut lhs = base.clone();
                for i in indices {
                    let _ = write!(lhs, "[{i}]");
                }
                let _ = writeln!(self.out, "{lhs} = {value};");
                Ok(())
            }
            NodeKind::Call { callee, args } => {
                self.pad(depth);
                let a = args.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
                let _ = writeln!(self.out, "{callee}({a});");
                Ok(())
            }
            NodeKind::Return(v) => {
                self.pad(depth);
                match v {
                    Some(e) => {
                        let _ = writeln!(self.out, "return {e};");
                    }
                    None => self.out.push_str("return;\n"),
                }
                Ok(())
            }
        }
    }

    fn emit_sync(&mut self, node: &Node, s: &SyncNode, depth: usize) -> Result<()> {
        match (self.model, s.name) {
            (TargetModel::OpenMp, SyncName::Barrier) => {
                self.pad(depth);
                self.out.push_str("#pragma omp barrier\n");
                Ok(())
            }
            (TargetModel::OpenMp, SyncName::Taskwait) => {
                self.pad(depth);
                self.out.push_str("#pragma omp taskwait\n");
                Ok(())
            }
            (TargetModel::OpenAcc, SyncName::Taskwait) => {
                self.pad(depth);
                self.out.push_str("#pragma acc wait\n");
                Ok(())
            }
            (TargetModel::OpenMp, SyncName::Critical | SyncName::Single | SyncName::Atomic) => {
                self.pad(depth);
                let name = s.name.keyword();
                match (s.name, &s.data[..]) {
                    (SyncName::Critical, [section]) => {
                        let _ = writeln!(self.out, "#pragma omp critical({section})");
                    }
                    _ => {
                        let _ = writeln!(self.out, "#pragma omp {name}");
                    }
                }
                match &s.body {
                    // atomic attaches to the assignment itself, not a block
                    Some(body) if s.name == SyncName::Atomic => match body.nodes.as_slice() {
                        [stmt] => self.emit_node(stmt, depth),
                        _ => Err(self.unrepresentable(node, "atomic with a non-assignment body")),
                    },
                    Some(body) => self.emit_block(body, depth),
                    None => Err(self.unrepresentable(node, "bodyless exclusive sync")),
                }
            }
            _ => Err(self.unrepresentable(node, &format!("sync `{}`", s.name.keyword()))),
        }
    }

    /// Pattern-match a task/spmd/loop chain into one combined pragma.
    fn emit_group(&mut self, node: &Node, task: Option<&TaskNode>, depth: usize) -> Result<()> {
        let mut parts = PragmaParts::new(self.model);
        let mut ext_consumed: Vec<NodeId> = Vec::new();
        let spmd_node: Option<&Node> = match (task, &node.kind) {
            (Some(t), _) => {
                if t.kind == TaskKind::Remote {
                    return Err(self.unrepresentable(node, "remote task"));
                }
                self.collect_ext(&t.body, &mut parts, &mut ext_consumed);
                let inner = self.significant_nodes(&t.body);
                match inner.as_slice() {
                    [one] if matches!(one.kind, NodeKind::Spmd(_)) => Some(*one),
                    _ => None,
                }
            }
            (None, NodeKind::Spmd(_)) => Some(node),
            _ => None,
        };
        let spmd: Option<&SpmdNode> = spmd_node.map(|n| match &n.kind {
            NodeKind::Spmd(s) => s,
            _ => unreachable!(),
        });
        let loop_node: Option<&Node> = match (spmd, &node.kind) {
            (Some(s), _) => {
                self.collect_ext(&s.body, &mut parts, &mut ext_consumed);
                let inner = self.significant_nodes(&s.body);
                match inner.as_slice() {
                    [one] if matches!(&one.kind, NodeKind::Loop(l) if l.parallel.is_some()) => Some(*one),
                    _ => None,
                }
            }
            (None, NodeKind::Loop(_)) if task.is_none() => Some(node),
            _ => None,
        };
        let lp_loop: Option<&LoopNode> = loop_node.map(|n| match &n.kind {
            NodeKind::Loop(l) => l,
            _ => unreachable!(),
        });
        if let Some(l) = lp_loop {
            self.collect_ext(&l.body, &mut parts, &mut ext_consumed);
        }

        // A reduction node registers in both the spmd and loop sync lists;
        // the emitted set keeps it to one clause.
        let mut emitted = Emitted::new();
        self.build_pragma(node, task, spmd, lp_loop, &mut parts, &mut emitted)?;
        for id in ext_consumed {
            self.skip.insert(id);
        }
        self.emit_pragma(&parts, depth);

        if let Some(l) = lp_loop {
            return self.emit_for(l, depth);
        }
        if let Some(s) = spmd {
            return self.emit_block(&s.body, depth);
        }
        if let Some(t) = task {
            return self.emit_block(&t.body, depth);
        }
        unreachable!("group without any region");
    }

    /// Region nodes that materialize in source (skips re-derived syncs and
    /// consumed extension nodes).
    fn significant_nodes<'r>(&self, region: &'r Region) -> Vec<&'r Node> {
        region
            .nodes
            .iter()
            .filter(|n| !self.skip.contains(&n.id) && !matches!(n.kind, NodeKind::Ext(_)))
            .collect()
    }

    fn collect_ext(&self, region: &Region, parts: &mut PragmaParts, consumed: &mut Vec<NodeId>) {
        if let Some(first) = region.nodes.first() {
            if let NodeKind::Ext(e) = &first.kind {
                for (k, v) in &e.entries {
                    let text = match v {
                        ExtValue::Str(s) if s.is_empty() => k.clone(),
                        ExtValue::Str(s) => format!("{k}({s})"),
                        ExtValue::Expr(e) => format!("{k}({e})"),
                        ExtValue::Symbols(syms) => format!("{k}({})", syms.join(", ")),
                    };
                    parts.tail.push(text);
                }
                consumed.push(first.id);
            }
        }
    }

    fn build_pragma(
        &self,
        node: &Node,
        task: Option<&TaskNode>,
        spmd: Option<&SpmdNode>,
        lp_loop: Option<&LoopNode>,
        parts: &mut PragmaParts,
        emitted: &mut Emitted,
    ) -> Result<()> {
        let ws = lp_loop.and_then(|l| match &l.parallel {
            Some(LoopParallel { kind: LoopParKind::Worksharing { schedule, chunk, distribute } }) => {
                Some((*schedule, chunk.clone(), *distribute))
            }
            _ => None,
        });
        let dist = ws.map(|(_, _, d)| d);
        match self.model {
            TargetModel::OpenMp => {
                if let Some(t) = task {
                    if t.kind == TaskKind::Offload {
                        parts.constructs.push("target".into());
                        if let Some((_, id)) = t.device {
                            if id != 0 {
                                parts.clauses.push(format!("device({id})"));
                            }
                        }
                        if t.is_async {
                            parts.clauses.push("nowait".into());
                        }
                    } else {
                        parts.constructs.push("task".into());
                    }
                    self.task_clauses(t, parts);
                    if spmd.is_none() && t.kind == TaskKind::Plain && lp_loop.is_some() {
                        return Err(self.unrepresentable(node, "plain task wrapping a bare loop"));
                    }
                }
                if let Some(s) = spmd {
                    let teams = s.num_teams.is_some()
                        || matches!(dist, Some(DistributeTarget::Teams | DistributeTarget::TeamsUnits));
                    let parallel = s.num_units.is_some()
                        || matches!(dist, Some(DistributeTarget::Units | DistributeTarget::TeamsUnits))
                        || !teams;
                    if teams {
                        parts.constructs.push("teams".into());
                        if let Some(e) = &s.num_teams {
                            parts.clauses.push(format!("num_teams({e})"));
                        }
                    }
                    if matches!(dist, Some(DistributeTarget::Teams | DistributeTarget::TeamsUnits)) {
                        parts.constructs.push("distribute".into());
                    }
                    if parallel {
                        parts.constructs.push("parallel".into());
                        if let Some(e) = &s.num_units {
                            parts.clauses.push(format!("num_threads({e})"));
                        }
                    }
                    self.sharing_clauses(&s.data, parts);
                    self.reduction_clauses(&s.sync, parts, emitted);
                }
                if let Some(l) = lp_loop {
                    match &l.parallel.as_ref().unwrap().kind {
                        LoopParKind::Worksharing { schedule, chunk, distribute } => {
                            if matches!(distribute, DistributeTarget::Units | DistributeTarget::TeamsUnits) {
                                parts.constructs.push("for".into());
                            }
                            if *schedule != SchedulePolicy::Static || chunk.is_some() {
                                let c = match chunk {
                                    Some(e) => format!("schedule({}, {e})", schedule.keyword()),
                                    None => format!("schedule({})", schedule.keyword()),
                                };
                                parts.clauses.push(c);
                            }
                        }
                        LoopParKind::Simd { simdlen } => {
                            parts.constructs.push("simd".into());
                            if simdlen.as_int_const() != Some(1) {
                                parts.clauses.push(format!("simdlen({simdlen})"));
                            }
                        }
                        LoopParKind::Taskloop { grainsize, num_tasks } => {
                            parts.constructs.push("taskloop".into());
                            if let Some(g) = grainsize {
                                parts.clauses.push(format!("grainsize({g})"));
                            }
                            if let Some(n) = num_tasks {
                                parts.clauses.push(format!("num_tasks({n})"));
                            }
                        }
                    }
                    self.loop_clauses(l, parts, emitted);
                }
            }
            TargetModel::OpenAcc => {
                if let Some(t) = task {
                    if t.kind != TaskKind::Offload {
                        return Err(self.unrepresentable(node, "plain task"));
                    }
                    if t.policy.is_some() {
                        return Err(self.unrepresentable(node, "task scheduling policy"));
                    }
                    if !t.depend.is_empty() {
                        return Err(self.unrepresentable(node, "task dependences"));
                    }
                    let Some(s) = spmd else {
                        return Err(self.unrepresentable(node, "offload task without an SPMD region"));
                    };
                    parts.constructs.push("parallel".into());
                    if let Some(e) = &s.num_teams {
                        parts.clauses.push(format!("num_gangs({e})"));
                    }
                    if let Some(e) = &s.num_units {
                        parts.clauses.push(format!("num_workers({e})"));
                    }
                    if let Some(LoopParKind::Simd { simdlen }) =
                        lp_loop.and_then(|l| l.parallel.as_ref()).map(|p| &p.kind)
                    {
                        if simdlen.as_int_const() != Some(1) {
                            parts.clauses.push(format!("vector_length({simdlen})"));
                        }
                    }
                    if t.is_async {
                        parts.clauses.push("async".into());
                    }
                    self.task_clauses(t, parts);
                    self.sharing_clauses(&s.data, parts);
                    self.reduction_clauses(&s.sync, parts, emitted);
                } else if spmd.is_some() {
                    return Err(self.unrepresentable(node, "host SPMD region"));
                }
                if let Some(l) = lp_loop {
                    parts.constructs.push("loop".into());
                    match &l.parallel.as_ref().unwrap().kind {
                        LoopParKind::Worksharing { schedule, chunk, distribute } => {
                            if *schedule != SchedulePolicy::Static || chunk.is_some() {
                                return Err(self.unrepresentable(node, "loop schedule"));
                            }
                            match distribute {
                                DistributeTarget::Units => {}
                                DistributeTarget::Teams => parts.clauses.push("gang".into()),
                                DistributeTarget::TeamsUnits => {
                                    parts.clauses.push("gang".into());
                                    parts.clauses.push("worker".into());
                                }
                            }
                        }
                        LoopParKind::Simd { .. } => parts.clauses.push("vector".into()),
                        LoopParKind::Taskloop { .. } => {
                            return Err(self.unrepresentable(node, "taskloop"));
                        }
                    }
                    if l.nowait {
                        return Err(self.unrepresentable(node, "nowait loop"));
                    }
                    self.loop_clauses(l, parts, emitted);
                }
            }
        }
        Ok(())
    }

    fn task_clauses(&self, t: &TaskNode, parts: &mut PragmaParts) {
        self.mapping_clauses(&t.data, parts);
        if self.model == TargetModel::OpenMp {
            self.sharing_clauses(&t.data, parts);
            let mut i = 0;
            while i < t.depend.len() {
                let mode = t.depend[i].0;
                let mut vars = Vec::new();
                while i < t.depend.len() && t.depend[i].0 == mode {
                    vars.push(render_varref(&t.depend[i].1));
                    i += 1;
                }
                parts.clauses.push(format!("depend({}: {})", mode.keyword(), vars.join(", ")));
            }
            if let Some(p) = t.policy {
                parts.clauses.push(format!("policy({})", p.keyword()));
            }
        }
    }

    fn mapping_clauses(&self, items: &[DataItem], parts: &mut PragmaParts) {
        for item in items {
            let Some(m) = item.mapping.known() else { continue };
            if m.visibility != Visibility::Explicit || m.property == MappingProp::None {
                continue;
            }
            let var = render_item_var(item);
            let clause = match (self.model, m.property) {
                (TargetModel::OpenMp, p) => {
                    let k = match p {
                        MappingProp::To => "to",
                        MappingProp::From => "from",
                        MappingProp::ToFrom => "tofrom",
                        MappingProp::Allocate => "alloc",
                        MappingProp::None => unreachable!(),
                    };
                    format!("map({k}: {var})")
                }
                (TargetModel::OpenAcc, MappingProp::To) => format!("copyin({var})"),
                (TargetModel::OpenAcc, MappingProp::From) => format!("copyout({var})"),
                (TargetModel::OpenAcc, MappingProp::ToFrom) => format!("copy({var})"),
                (TargetModel::OpenAcc, MappingProp::Allocate) => format!("create({var})"),
                (TargetModel::OpenAcc, MappingProp::None) => unreachable!(),
            };
            parts.clauses.push(clause);
        }
    }

    fn sharing_clauses(&self, items: &[DataItem], parts: &mut PragmaParts) {
        for item in items {
            let Some(s) = item.sharing.known() else { continue };
            if s.visibility != Visibility::Explicit {
                continue;
            }
            // Reduction variables re-emit through their reduction clause.
            if self.reduction_symbol(items, &item.symbol) {
                continue;
            }
            let kw = match s.property {
                SharingProp::Shared => "shared",
                SharingProp::Private => "private",
                SharingProp::Firstprivate => "firstprivate",
                SharingProp::Lastprivate => "lastprivate",
            };
            if self.model == TargetModel::OpenAcc
                && matches!(s.property, SharingProp::Shared | SharingProp::Lastprivate)
            {
                continue; // no OpenACC spelling; defaults reproduce them
            }
            parts.clauses.push(format!("{kw}({})", item.symbol));
        }
    }

    /// True when a symbol's explicit private sharing came from a reduction
    /// clause rather than a private clause.
    fn reduction_symbol(&self, _items: &[DataItem], sym: &str) -> bool {
        let mut found = false;
        self.module.walk(&mut |n| {
            if let NodeKind::Sync(s) = &n.kind {
                if s.name == SyncName::Reduction && s.data.iter().any(|d| d == sym) {
                    found = true;
                }
            }
        });
        found
    }

    fn reduction_clauses(&self, sync: &[NodeId], parts: &mut PragmaParts, emitted: &mut Emitted) {
        for id in sync {
            if !emitted.insert(*id) {
                continue;
            }
            if let Some(Node { kind: NodeKind::Sync(s), .. }) = self.module.find_node(*id) {
                if s.name == SyncName::Reduction {
                    if let Some(op) = s.operation {
                        parts.clauses.push(format!("reduction({}: {})", op.symbol(), s.data.join(", ")));
                    }
                }
            }
        }
    }

    fn loop_clauses(&self, l: &LoopNode, parts: &mut PragmaParts, emitted: &mut Emitted) {
        if l.collapse > 1 {
            parts.clauses.push(format!("collapse({})", l.collapse));
        }
        self.sharing_clauses(&l.data, parts);
        self.reduction_clauses(&l.sync, parts, emitted);
        if l.nowait && self.model == TargetModel::OpenMp {
            parts.clauses.push("nowait".into());
        }
    }

    fn emit_pragma(&mut self, parts: &PragmaParts, depth: usize) {
        self.pad(depth);
        let ns = match self.model {
            TargetModel::OpenMp => "omp",
            TargetModel::OpenAcc => "acc",
        };
        let mut line = format!("#pragma {ns}");
        for c in &parts.constructs {
            let _ = write!(line, " {c}");
        }
        for c in parts.clauses.iter().chain(&parts.tail) {
            let _ = write!(line, " {c}");
        }
        self.out.push_str(&line);
        self.out.push('\n');
    }

    fn emit_block(&mut self, region: &Region, depth: usize) -> Result<()> {
        self.pad(depth);
        self.out.push_str("{\n");
        self.emit_region(region, depth + 1)?;
        self.pad(depth);
        self.out.push_str("}\n");
        Ok(())
    }

    fn emit_for(&mut self, l: &LoopNode, depth: usize) -> Result<()> {
        self.pad(depth);
        let _ = writeln!(
            self.out,
            "for (int {v} = {}; {v} < {}; {}) {{",
            l.lower,
            l.upper,
            incr_text(&l.induction, &l.step),
            v = l.induction
        );
        self.emit_region(&l.body, depth + 1)?;
        self.pad(depth);
        self.out.push_str("}\n");
        Ok(())
    }
}

struct PragmaParts {
    constructs: Vec<String>,
    clauses: Vec<String>,
    /// Extension clauses go last.
    tail: Vec<String>,
}

impl PragmaParts {
    fn new(_model: TargetModel) -> Self {
        PragmaParts { constructs: Vec::new(), clauses: Vec::new(), tail: Vec::new() }
    }
}

fn incr_text(var: &str, step: &Expr) -> String {
    match step.as_int_const() {
        Some(1) => format!("{var}++"),
        Some(s) if s > 0 => format!("{var} += {s}"),
        Some(s) => format!("{var} -= {}", -s),
        None => format!("{var} += {step}"),
    }
}

fn render_varref(v: &crate::ast::VarRef) -> String {
    let mut t = v.name.clone();
    for s in &v.sections {
        t.push('[');
        t.push_str(&s.lower.to_string());
        if let Some(len) = &s.length {
            t.push(':');
            t.push_str(&len.to_string());
            match &s.stride {
                Some(st) if st.as_int_const() != Some(1) => {
                    t.push(':');
                    t.push_str(&st.to_string());
                }
                _ => {}
            }
        }
        t.push(']');
    }
    t
}

fn render_item_var(item: &DataItem) -> String {
    let mut t = item.symbol.clone();
    if let Some(d) = item.distribution.known() {
        for s in &d.section {
            t.push('[');
            t.push_str(&s.lower.to_string());
            if let Some(len) = &s.length {
                t.push(':');
                t.push_str(&len.to_string());
                match &s.stride {
                    Some(st) if st.as_int_const() != Some(1) => {
                        t.push(':');
                        t.push_str(&st.to_string());
                    }
                    _ => {}
                }
            }
            t.push(']');
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::ir::{build_upir, canonicalize, print_upir};

    fn pipeline(src: &str) -> Module {
        analysis::run_all(&build_upir(&parse_kernel_source(src).unwrap()).unwrap()).unwrap()
    }

    fn canon_text(m: &Module) -> String {
        print_upir(&canonicalize(m)).unwrap()
    }

    const AXPY_OMP: &str = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma omp target parallel for num_threads(1024)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";

    #[test]
    fn axpy_to_openacc_and_back() {
        let m = pipeline(AXPY_OMP);
        let acc_src = unparse_to_openacc(&m).unwrap();
        assert!(acc_src.contains("#pragma acc parallel loop num_workers(1024)"), "{acc_src}");
        let rebuilt = pipeline(&acc_src);
        assert_eq!(canon_text(&m), canon_text(&rebuilt), "\n{acc_src}");
    }

    #[test]
    fn axpy_to_openmp_and_back() {
        let m = pipeline(AXPY_OMP);
        let omp_src = unparse_to_openmp(&m).unwrap();
        assert!(omp_src.contains("#pragma omp target parallel for num_threads(1024)"), "{omp_src}");
        let rebuilt = pipeline(&omp_src);
        assert_eq!(canon_text(&m), canon_text(&rebuilt), "\n{omp_src}");
    }

    #[test]
    fn cuda_derived_to_openmp_and_back() {
        let src = "\
__global__ void axpy_kernel(float x[], float y[], float a, int n) {
  int i = blockDim.x * blockIdx.x + threadIdx.x;
  if (i < n) y[i] = y[i] + a * x[i];
}
void axpy(float d_x[], float d_y[], float a, int n) {
  axpy_kernel<<<(n + 255) / 256, 256>>>(d_x, d_y, a, n);
}
";
        let m = pipeline(src);
        let omp_src = unparse_to_openmp(&m).unwrap();
        let rebuilt = pipeline(&omp_src);
        assert_eq!(canon_text(&m), canon_text(&rebuilt), "\n{omp_src}");
    }

    #[test]
    fn taskloop_not_representable_in_acc() {
        let src = "\
void f(int y[], int n) {
  #pragma omp taskloop grainsize(2)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let m = pipeline(src);
        let err = unparse_to_openacc(&m).unwrap_err();
        assert!(err.msg.contains("not representable"), "{err}");
        // and the OpenMP route still round-trips
        let omp_src = unparse_to_openmp(&m).unwrap();
        let rebuilt = pipeline(&omp_src);
        assert_eq!(canon_text(&m), canon_text(&rebuilt), "\n{omp_src}");
    }

    #[test]
    fn policy_not_representable_in_acc() {
        let src = "\
void f(int y[]) {
  #pragma omp task policy(help-first)
  y[0] = 1;
}
";
        let m = pipeline(src);
        assert!(unparse_to_openacc(&m).is_err());
        let omp_src = unparse_to_openmp(&m).unwrap();
        assert!(omp_src.contains("policy(help-first)"), "{omp_src}");
        let rebuilt = pipeline(&omp_src);
        assert_eq!(canon_text(&m), canon_text(&rebuilt));
    }
}
