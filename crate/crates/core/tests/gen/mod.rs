//! Seeded random generator of valid UPIR modules for round-trip property
//! tests. Generated modules respect the structural invariants (worksharing
//! inside spmd, matched async pairs, mapping only under offload/data
//! regions), so validation must accept every one of them.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use upir_core::analysis;
use upir_core::ast::{ArraySection, BinOp, DependMode, Expr, Param, ReductionOp, ScalarType, SchedulePolicy, TaskPolicy, Type, VarRef};
use upir_core::ir::*;

pub struct Gen {
    rng: StdRng,
    next_id: u32,
    next_sym: u32,
}

#[derive(Clone)]
struct Ctx {
    in_spmd: bool,
    mapping_ok: bool,
    depth: u32,
    scalars: Vec<String>,
    arrays: Vec<String>,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen { rng: StdRng::seed_from_u64(seed), next_id: 0, next_sym: 0 }
    }

    fn id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn node(&mut self, kind: NodeKind) -> Node {
        Node { id: self.id(), kind }
    }

    fn sym(&mut self, prefix: &str) -> String {
        let s = format!("{prefix}{}", self.next_sym);
        self.next_sym += 1;
        s
    }

    pub fn module(&mut self) -> Module {
        self.next_id = 0;
        self.next_sym = 0;
        let mut functions = Vec::new();
        for fi in 0..self.rng.gen_range(1..=2) {
            let mut params = vec![
                Param { name: format!("arr{fi}"), ty: Type { elem: ScalarType::Float, rank: 1 } },
                Param { name: format!("len{fi}"), ty: Type::scalar(ScalarType::Int) },
            ];
            if self.rng.gen_bool(0.5) {
                params.push(Param {
                    name: format!("vec{fi}"),
                    ty: Type { elem: ScalarType::Int, rank: 1 },
                });
            }
            let ctx = Ctx {
                in_spmd: false,
                mapping_ok: false,
                depth: 3,
                scalars: params
                    .iter()
                    .filter(|p| p.ty.rank == 0)
                    .map(|p| p.name.clone())
                    .collect(),
                arrays: params
                    .iter()
                    .filter(|p| p.ty.rank > 0)
                    .map(|p| p.name.clone())
                    .collect(),
            };
            let body = self.region(ctx);
            functions.push(UpirFunction {
                name: format!("fn{fi}"),
                params,
                ret: None,
                is_kernel: false,
                body,
            });
        }
        let mut m = Module { functions };
        fix_sync_and_branch(&mut m);
        // Nesting links and levels come from the analysis, which only sets
        // consistent values.
        analysis::annotate_nesting(&m).unwrap()
    }

    fn region(&mut self, mut ctx: Ctx) -> Region {
        let count = self.rng.gen_range(1..=4);
        let mut nodes = Vec::new();
        for _ in 0..count {
            self.gen_node(&mut ctx, &mut nodes);
        }
        Region::new(nodes)
    }

    fn gen_node(&mut self, ctx: &mut Ctx, out: &mut Vec<Node>) {
        let choice = if ctx.depth == 0 { self.rng.gen_range(0..2) } else { self.rng.gen_range(0..14) };
        match choice {
            0 => {
                // assignment to an array element or scalar
                if !ctx.arrays.is_empty() && self.rng.gen_bool(0.7) {
                    let base = ctx.arrays[self.rng.gen_range(0..ctx.arrays.len())].clone();
                    let idx = self.expr(ctx, 1);
                    let value = self.expr(ctx, 2);
                    out.push(self.node(NodeKind::Assign { base, indices: vec![idx], value }));
                } else if !ctx.scalars.is_empty() {
                    let base = ctx.scalars[self.rng.gen_range(0..ctx.scalars.len())].clone();
                    let value = self.expr(ctx, 2);
                    out.push(self.node(NodeKind::Assign { base, indices: vec![], value }));
                }
            }
            1 => {
                let name = self.sym("v");
                let init = if self.rng.gen_bool(0.8) { Some(self.expr(ctx, 2)) } else { None };
                out.push(self.node(NodeKind::Decl { ty: ScalarType::Int, name: name.clone(), init }));
                ctx.scalars.push(name);
            }
            2 => {
                let cond = Expr::bin(BinOp::Lt, self.expr(ctx, 1), self.expr(ctx, 1));
                let mut inner = ctx.clone();
                inner.depth = ctx.depth.saturating_sub(1);
                let then_region = self.region(inner.clone());
                let else_region = if self.rng.gen_bool(0.3) { Some(self.region(inner)) } else { None };
                out.push(self.node(NodeKind::If(IfNode { cond, then_region, else_region })));
            }
            3 => {
                // plain canonical loop
                let node = self.loop_node(ctx, None);
                out.push(node);
            }
            4 | 5 => {
                // spmd region
                let mut inner = ctx.clone();
                inner.in_spmd = true;
                inner.depth = ctx.depth - 1;
                let body = self.region(inner);
                let num_units =
                    if self.rng.gen_bool(0.7) { Some(Expr::IntLit(self.rng.gen_range(1..=8))) } else { None };
                let num_teams =
                    if self.rng.gen_bool(0.3) { Some(Expr::IntLit(self.rng.gen_range(1..=4))) } else { None };
                let targets = match self.rng.gen_range(0..3) {
                    0 => vec![TargetPlatform::Cpu],
                    1 => vec![TargetPlatform::Gpu],
                    _ => vec![TargetPlatform::Gpu, TargetPlatform::Cluster],
                };
                let data = self.data_items(ctx, false);
                out.push(self.node(NodeKind::Spmd(SpmdNode {
                    targets,
                    num_teams,
                    num_units,
                    data,
                    body,
                    ..SpmdNode::default()
                })));
            }
            6 => {
                // task: plain, offload, or remote
                let kind = match self.rng.gen_range(0..3) {
                    0 => TaskKind::Plain,
                    1 => TaskKind::Offload,
                    _ => TaskKind::Remote,
                };
                let device = match kind {
                    TaskKind::Plain => None,
                    _ => Some((
                        [Device::Nvptx, Device::Amd, Device::Fpga, Device::Host]
                            [self.rng.gen_range(0..4)],
                        self.rng.gen_range(0..3),
                    )),
                };
                let mut inner = ctx.clone();
                inner.mapping_ok = kind != TaskKind::Plain;
                inner.depth = ctx.depth - 1;
                let body = self.region(inner);
                let mut depend = Vec::new();
                if !ctx.arrays.is_empty() && self.rng.gen_bool(0.4) {
                    let mode = [DependMode::In, DependMode::Out, DependMode::InOut]
                        [self.rng.gen_range(0..3)];
                    let name = ctx.arrays[self.rng.gen_range(0..ctx.arrays.len())].clone();
                    depend.push((mode, VarRef::plain(name)));
                }
                let data = self.data_items(ctx, kind != TaskKind::Plain);
                let policy = match self.rng.gen_range(0..3) {
                    0 => Some(TaskPolicy::HelpFirst),
                    1 => Some(TaskPolicy::WorkFirst),
                    _ => None,
                };
                let is_async = self.rng.gen_bool(0.3);
                out.push(self.node(NodeKind::Task(TaskNode {
                    kind,
                    device,
                    is_async,
                    depend,
                    data,
                    sync: Vec::new(),
                    policy,
                    body,
                })));
            }
            7 if ctx.in_spmd => {
                // worksharing loop
                let policy = [
                    SchedulePolicy::Static,
                    SchedulePolicy::Dynamic,
                    SchedulePolicy::Guided,
                    SchedulePolicy::Runtime,
                    SchedulePolicy::Auto,
                ][self.rng.gen_range(0..5)];
                let chunk =
                    if self.rng.gen_bool(0.4) { Some(Expr::IntLit(self.rng.gen_range(1..=4))) } else { None };
                let distribute = [
                    DistributeTarget::Units,
                    DistributeTarget::Teams,
                    DistributeTarget::TeamsUnits,
                ][self.rng.gen_range(0..3)];
                let lp = LoopParallel { kind: LoopParKind::Worksharing { schedule: policy, chunk, distribute } };
                let node = self.loop_node(ctx, Some(lp));
                out.push(node);
            }
            8 => {
                // simd or taskloop parallelization
                let lp = if self.rng.gen_bool(0.5) {
                    LoopParallel { kind: LoopParKind::Simd { simdlen: Expr::IntLit(self.rng.gen_range(1..=8)) } }
                } else if self.rng.gen_bool(0.5) {
                    LoopParallel {
                        kind: LoopParKind::Taskloop {
                            grainsize: Some(Expr::IntLit(self.rng.gen_range(1..=8))),
                            num_tasks: None,
                        },
                    }
                } else {
                    LoopParallel {
                        kind: LoopParKind::Taskloop {
                            grainsize: None,
                            num_tasks: Some(Expr::IntLit(self.rng.gen_range(1..=4))),
                        },
                    }
                };
                let node = self.loop_node(ctx, Some(lp));
                out.push(node);
            }
            9 if ctx.in_spmd => {
                // collective syncs
                match self.rng.gen_range(0..3) {
                    0 => {
                        let implicit = self.rng.gen_bool(0.5);
                        out.push(self.node(NodeKind::Sync(SyncNode::barrier(implicit))));
                    }
                    1 if !ctx.scalars.is_empty() => {
                        let sym = ctx.scalars[self.rng.gen_range(0..ctx.scalars.len())].clone();
                        let op = [ReductionOp::Add, ReductionOp::Mul, ReductionOp::Max]
                            [self.rng.gen_range(0..3)];
                        out.push(self.node(NodeKind::Sync(SyncNode {
                            name: SyncName::Reduction,
                            mode: SyncMode::Sync,
                            primary: SyncUnit::thread(0),
                            secondary: SyncUnit::all_threads(),
                            operation: Some(op),
                            data: vec![sym],
                            implicit: false,
                            body: None,
                        })));
                    }
                    _ => {
                        // matched async barrier pair with an optional gap
                        let arrive = self.node(NodeKind::Sync(SyncNode {
                            mode: SyncMode::Async(SyncStep::ArriveCompute),
                            ..SyncNode::barrier(false)
                        }));
                        out.push(arrive);
                        if self.rng.gen_bool(0.5) && !ctx.scalars.is_empty() {
                            let base = ctx.scalars[self.rng.gen_range(0..ctx.scalars.len())].clone();
                            let value = self.expr(ctx, 1);
                            out.push(self.node(NodeKind::Assign { base, indices: vec![], value }));
                        }
                        let wait = self.node(NodeKind::Sync(SyncNode {
                            mode: SyncMode::Async(SyncStep::WaitRelease),
                            ..SyncNode::barrier(false)
                        }));
                        out.push(wait);
                    }
                }
            }
            10 => {
                out.push(self.node(NodeKind::Sync(SyncNode {
                    name: SyncName::Taskwait,
                    mode: SyncMode::Sync,
                    primary: SyncUnit { kind: SyncUnitKind::Task, unit: SyncUnitId::All },
                    secondary: SyncUnit { kind: SyncUnitKind::Task, unit: SyncUnitId::All },
                    operation: None,
                    data: Vec::new(),
                    implicit: false,
                    body: None,
                })));
            }
            11 => {
                // structured data region
                let mut inner = ctx.clone();
                inner.mapping_ok = true;
                inner.depth = ctx.depth - 1;
                let body = self.region(inner);
                let data = self.data_items(ctx, true);
                out.push(self.node(NodeKind::DataRegion(DataRegionNode { data, body })));
            }
            12 => {
                // allocation pair with a movement in between
                let buf = self.sym("buf");
                let size = Expr::IntLit(self.rng.gen_range(1..=8) * 8);
                let allocator = [AllocatorAttr::Default, AllocatorAttr::LargeCap]
                    [self.rng.gen_range(0..2)]
                .clone();
                let alloc = self.node(NodeKind::MmAlloc(MmAllocNode {
                    allocator,
                    symbol: buf.clone(),
                    size: size.clone(),
                }));
                out.push(alloc);
                if !ctx.arrays.is_empty() && self.rng.gen_bool(0.5) {
                    let src = ctx.arrays[self.rng.gen_range(0..ctx.arrays.len())].clone();
                    let direction =
                        if self.rng.gen_bool(0.5) { Direction::Forward } else { Direction::Backward };
                    let mv = self.node(NodeKind::DataMovement(DataMovementNode {
                        dest_space: MemSpace::Host,
                        dest: buf.clone(),
                        src_space: MemSpace::Host,
                        src,
                        size,
                        direction,
                        memcpy: MemcpyAttr::Default,
                        depend: Vec::new(),
                    }));
                    out.push(mv);
                }
                let dealloc = self.node(NodeKind::MmDealloc(MmDeallocNode {
                    deallocator: DeallocatorAttr::Default,
                    symbol: buf,
                }));
                out.push(dealloc);
            }
            _ => {
                // extension node or exclusive sync
                if self.rng.gen_bool(0.5) {
                    let mut entries = std::collections::BTreeMap::new();
                    entries.insert("hint".to_string(), ExtValue::Str("fast".into()));
                    entries.insert("width".to_string(), ExtValue::Expr(Expr::IntLit(4)));
                    if !ctx.arrays.is_empty() {
                        entries.insert("vars".to_string(), ExtValue::Symbols(vec![ctx.arrays[0].clone()]));
                    }
                    out.push(self.node(NodeKind::Ext(ExtensionNode { entries })));
                } else {
                    let name =
                        [SyncName::Single, SyncName::Critical, SyncName::Atomic][self.rng.gen_range(0..3)];
                    let mut inner = ctx.clone();
                    inner.depth = 0;
                    let body = self.region(inner);
                    out.push(self.node(NodeKind::Sync(SyncNode {
                        name,
                        mode: SyncMode::Sync,
                        primary: SyncUnit::thread(0),
                        secondary: SyncUnit::all_threads(),
                        operation: None,
                        data: Vec::new(),
                        implicit: false,
                        body: Some(body),
                    })));
                }
            }
        }
    }

    fn loop_node(&mut self, ctx: &Ctx, parallel: Option<LoopParallel>) -> Node {
        let var = self.sym("i");
        let mut inner = ctx.clone();
        inner.depth = 0;
        inner.scalars.push(var.clone());
        let body = self.region(inner);
        let data = if self.rng.gen_bool(0.3) {
            vec![DataItem {
                sharing: FieldState::Known(Sharing {
                    property: SharingProp::Private,
                    visibility: Visibility::Implicit,
                }),
                ..DataItem::unknown(var.clone())
            }]
        } else {
            Vec::new()
        };
        let upper = self.bound_expr(ctx);
        let step = Expr::IntLit(self.rng.gen_range(1..=3));
        let nowait = self.rng.gen_bool(0.2);
        self.node(NodeKind::Loop(LoopNode {
            induction: var,
            lower: Expr::IntLit(0),
            upper,
            step,
            data,
            collapse: 1,
            sync: Vec::new(),
            nowait,
            parallel,
            body,
        }))
    }

    fn bound_expr(&mut self, ctx: &Ctx) -> Expr {
        if self.rng.gen_bool(0.5) && !ctx.scalars.is_empty() {
            Expr::ident(ctx.scalars[self.rng.gen_range(0..ctx.scalars.len())].clone())
        } else {
            Expr::IntLit(self.rng.gen_range(1..=12))
        }
    }

    fn expr(&mut self, ctx: &Ctx, depth: u32) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.4) {
            return match self.rng.gen_range(0..4) {
                0 => Expr::IntLit(self.rng.gen_range(-4..=12)),
                1 => Expr::FloatLit([0.5, 1.25, 2.0, 3.75][self.rng.gen_range(0..4)]),
                2 if !ctx.scalars.is_empty() => {
                    Expr::ident(ctx.scalars[self.rng.gen_range(0..ctx.scalars.len())].clone())
                }
                _ => Expr::Intrinsic(
                    [crate::gen::intr_unit(), crate::gen::intr_team(), crate::gen::intr_upt()]
                        [self.rng.gen_range(0..3)],
                ),
            };
        }
        match self.rng.gen_range(0..6) {
            0 => Expr::Neg(Box::new(self.expr(ctx, depth - 1))),
            1 if !ctx.arrays.is_empty() => Expr::Index {
                base: ctx.arrays[self.rng.gen_range(0..ctx.arrays.len())].clone(),
                indices: vec![self.expr(ctx, depth - 1)],
            },
            _ => {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem, BinOp::Lt]
                    [self.rng.gen_range(0..6)];
                Expr::bin(op, self.expr(ctx, depth - 1), self.expr(ctx, depth - 1))
            }
        }
    }

    fn data_items(&mut self, ctx: &Ctx, mapping_ok: bool) -> Vec<DataItem> {
        let mut items = Vec::new();
        if ctx.arrays.is_empty() || self.rng.gen_bool(0.4) {
            return items;
        }
        let sym = ctx.arrays[self.rng.gen_range(0..ctx.arrays.len())].clone();
        let mut item = DataItem::unknown(sym);
        if self.rng.gen_bool(0.6) {
            let property = [
                SharingProp::Shared,
                SharingProp::Private,
                SharingProp::Firstprivate,
                SharingProp::Lastprivate,
            ][self.rng.gen_range(0..4)];
            item.sharing = FieldState::Known(Sharing { property, visibility: Visibility::Explicit });
        }
        if mapping_ok && self.rng.gen_bool(0.7) {
            let property = [MappingProp::To, MappingProp::From, MappingProp::ToFrom, MappingProp::Allocate]
                [self.rng.gen_range(0..4)];
            let mapper = if self.rng.gen_bool(0.2) { Some("mapper_fn".to_string()) } else { None };
            item.mapping = FieldState::Known(Mapping { property, visibility: Visibility::Explicit, mapper });
        }
        if self.rng.gen_bool(0.3) {
            item.access = FieldState::Known(
                [Access::ReadOnly, Access::WriteOnly, Access::ReadWrite][self.rng.gen_range(0..3)],
            );
        }
        if self.rng.gen_bool(0.3) {
            let pattern = [
                DistributionPattern::Block,
                DistributionPattern::Cyclic,
                DistributionPattern::Linear,
                DistributionPattern::Loop,
            ][self.rng.gen_range(0..4)];
            let section = if self.rng.gen_bool(0.5) {
                vec![ArraySection {
                    lower: Expr::IntLit(0),
                    length: if self.rng.gen_bool(0.5) { Some(Expr::IntLit(8)) } else { None },
                    stride: Some(Expr::IntLit(1)),
                }]
            } else {
                Vec::new()
            };
            item.distribution = FieldState::Known(Distribution { unit_id: None, pattern, section });
        }
        items.push(item);
        items
    }
}

pub fn intr_unit() -> upir_core::ast::Intrinsic {
    upir_core::ast::Intrinsic::UnitId
}
pub fn intr_team() -> upir_core::ast::Intrinsic {
    upir_core::ast::Intrinsic::TeamId
}
pub fn intr_upt() -> upir_core::ast::Intrinsic {
    upir_core::ast::Intrinsic::UnitsPerTeam
}

/// Fill sync lists with each node's direct sync children and branch lists
/// with if-nodes inside spmd bodies, keeping every reference resolvable.
fn fix_sync_and_branch(m: &mut Module) {
    m.walk_mut(&mut |node| {
        let (sync, body) = match &mut node.kind {
            NodeKind::Spmd(s) => (&mut s.sync, &s.body),
            NodeKind::Task(t) => (&mut t.sync, &t.body),
            NodeKind::Loop(l) => (&mut l.sync, &l.body),
            _ => return,
        };
        *sync = body
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Sync(_)))
            .map(|n| n.id)
            .collect();
    });
    m.walk_mut(&mut |node| {
        if let NodeKind::Spmd(s) = &mut node.kind {
            let mut ifs = Vec::new();
            fn find_ifs(region: &Region, out: &mut Vec<NodeId>) {
                for n in &region.nodes {
                    if matches!(n.kind, NodeKind::If(_)) {
                        out.push(n.id);
                    }
                    for r in n.regions() {
                        find_ifs(r, out);
                    }
                }
            }
            find_ifs(&s.body, &mut ifs);
            s.branch = ifs.into_iter().take(2).collect();
        }
    });
}
