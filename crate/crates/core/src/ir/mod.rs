//! The unified parallel IR: node types, regions, and modules.
//!
//! Nodes carry module-unique ids; cross references (sync lists, branch lists,
//! nesting links) are by id and printed positionally after canonicalization.

pub mod build;
pub mod canon;
pub mod parse;
pub mod print;

pub use build::build_upir;
pub use canon::{canonicalize, validate};
pub use parse::parse_upir;
pub use print::print_upir;

use crate::ast::{ArraySection, DependMode, Expr, Param, ReductionOp, ScalarType, SchedulePolicy, TaskPolicy, VarRef};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Module {
    pub functions: Vec<UpirFunction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpirFunction {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<ScalarType>,
    pub is_kernel: bool,
    pub body: Region,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    pub nodes: Vec<Node>,
}

impl Region {
    pub fn new(nodes: Vec<Node>) -> Self {
        Region { nodes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Spmd(SpmdNode),
    Loop(LoopNode),
    Task(TaskNode),
    /// Structured data region (`target data` / `acc data`).
    DataRegion(DataRegionNode),
    DataMovement(DataMovementNode),
    DataUpdate(DataUpdateNode),
    MmAlloc(MmAllocNode),
    MmDealloc(MmDeallocNode),
    Sync(SyncNode),
    Ext(ExtensionNode),
    // Base statements carried through from the kernel language.
    If(IfNode),
    /// Non-canonical for-loop kept in source form.
    BaseFor(BaseForNode),
    Decl { ty: ScalarType, name: String, init: Option<Expr> },
    Assign { base: String, indices: Vec<Expr>, value: Expr },
    Call { callee: String, args: Vec<Expr> },
    Return(Option<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TargetPlatform {
    Cpu,
    Gpu,
    Cluster,
}

impl TargetPlatform {
    pub fn keyword(&self) -> &'static str {
        match self {
            TargetPlatform::Cpu => "cpu",
            TargetPlatform::Gpu => "gpu",
            TargetPlatform::Cluster => "cluster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpmdNode {
    pub targets: Vec<TargetPlatform>,
    pub num_teams: Option<Expr>,
    pub num_units: Option<Expr>,
    pub data: Vec<DataItem>,
    pub nested_parent: Option<NodeId>,
    pub nested_child: Option<NodeId>,
    /// Innermost region is level 0; set by the nesting analysis.
    pub nested_level: Option<i64>,
    /// If-regions that may diverge on unit/team index.
    pub branch: Vec<NodeId>,
    pub sync: Vec<NodeId>,
    pub body: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopNode {
    pub induction: String,
    /// Normalized bounds: iteration set is `lower, lower+step, ...` strictly
    /// below `upper`, with positive step.
    pub lower: Expr,
    pub upper: Expr,
    pub step: Expr,
    pub data: Vec<DataItem>,
    pub collapse: i64,
    pub sync: Vec<NodeId>,
    /// Suppresses the implicit trailing barrier.
    pub nowait: bool,
    pub parallel: Option<LoopParallel>,
    pub body: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopParallel {
    pub kind: LoopParKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopParKind {
    Worksharing { schedule: SchedulePolicy, chunk: Option<Expr>, distribute: DistributeTarget },
    Simd { simdlen: Expr },
    Taskloop { grainsize: Option<Expr>, num_tasks: Option<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributeTarget {
    Teams,
    Units,
    TeamsUnits,
}

impl DistributeTarget {
    pub fn keyword(&self) -> &'static str {
        match self {
            DistributeTarget::Teams => "teams",
            DistributeTarget::Units => "units",
            DistributeTarget::TeamsUnits => "teams,units",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Plain,
    Offload,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    Nvptx,
    Amd,
    Fpga,
    Host,
}

impl Device {
    pub fn keyword(&self) -> &'static str {
        match self {
            Device::Nvptx => "nvptx",
            Device::Amd => "amd",
            Device::Fpga => "fpga",
            Device::Host => "host",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub kind: TaskKind,
    /// Present iff kind is offload or remote.
    pub device: Option<(Device, i64)>,
    /// Task does not synchronize with its spawner until a wait.
    pub is_async: bool,
    pub depend: Vec<(DependMode, VarRef)>,
    pub data: Vec<DataItem>,
    pub sync: Vec<NodeId>,
    pub policy: Option<TaskPolicy>,
    pub body: Region,
}

impl Default for TaskNode {
    fn default() -> Self {
        TaskNode {
            kind: TaskKind::Plain,
            device: None,
            is_async: false,
            depend: Vec::new(),
            data: Vec::new(),
            sync: Vec::new(),
            policy: None,
            body: Region::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataRegionNode {
    pub data: Vec<DataItem>,
    pub body: Region,
}

/// Named memory space known to the interpreter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MemSpace {
    Host,
    Device(Device, i64),
}

impl fmt::Display for MemSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemSpace::Host => write!(f, "host"),
            MemSpace::Device(d, id) => write!(f, "{}:{id}", d.keyword()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// host -> device
    Forward,
    /// device -> host
    Backward,
}

impl Direction {
    pub fn keyword(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMovementNode {
    pub dest_space: MemSpace,
    pub dest: String,
    pub src_space: MemSpace,
    pub src: String,
    /// Size in bytes; must evaluate > 0.
    pub size: Expr,
    pub direction: Direction,
    pub memcpy: MemcpyAttr,
    pub depend: Vec<(DependMode, VarRef)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataUpdateNode {
    pub data: Vec<String>,
    pub direction: Direction,
    pub memcpy: MemcpyAttr,
    pub depend: Vec<(DependMode, VarRef)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmAllocNode {
    pub allocator: AllocatorAttr,
    pub symbol: String,
    pub size: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmDeallocNode {
    pub deallocator: DeallocatorAttr,
    pub symbol: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncName {
    Barrier,
    Reduction,
    Taskwait,
    Broadcast,
    Allreduce,
    Send,
    Recv,
    Single,
    Critical,
    Atomic,
}

impl SyncName {
    pub fn keyword(&self) -> &'static str {
        match self {
            SyncName::Barrier => "barrier",
            SyncName::Reduction => "reduction",
            SyncName::Taskwait => "taskwait",
            SyncName::Broadcast => "broadcast",
            SyncName::Allreduce => "allreduce",
            SyncName::Send => "send",
            SyncName::Recv => "recv",
            SyncName::Single => "single",
            SyncName::Critical => "critical",
            SyncName::Atomic => "atomic",
        }
    }

    pub fn requires_operation(&self) -> bool {
        matches!(self, SyncName::Reduction | SyncName::Allreduce)
    }

    pub fn forbids_operation(&self) -> bool {
        matches!(self, SyncName::Barrier | SyncName::Taskwait)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncStep {
    ArriveCompute,
    WaitRelease,
}

impl SyncStep {
    pub fn keyword(&self) -> &'static str {
        match self {
            SyncStep::ArriveCompute => "arrive-compute",
            SyncStep::WaitRelease => "wait-release",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncMode {
    Sync,
    Async(SyncStep),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncUnitKind {
    Task,
    Thread,
    Rank,
}

impl SyncUnitKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            SyncUnitKind::Task => "task",
            SyncUnitKind::Thread => "thread",
            SyncUnitKind::Rank => "rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncUnitId {
    /// `*`: every unit in scope.
    All,
    Id(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncUnit {
    pub kind: SyncUnitKind,
    pub unit: SyncUnitId,
}

impl SyncUnit {
    pub fn all_threads() -> Self {
        SyncUnit { kind: SyncUnitKind::Thread, unit: SyncUnitId::All }
    }

    pub fn thread(id: i64) -> Self {
        SyncUnit { kind: SyncUnitKind::Thread, unit: SyncUnitId::Id(Expr::IntLit(id)) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncNode {
    pub name: SyncName,
    pub mode: SyncMode,
    pub primary: SyncUnit,
    pub secondary: SyncUnit,
    pub operation: Option<ReductionOp>,
    pub data: Vec<String>,
    pub implicit: bool,
    /// single/critical/atomic carry the guarded region.
    pub body: Option<Region>,
}

impl SyncNode {
    pub fn barrier(implicit: bool) -> Self {
        SyncNode {
            name: SyncName::Barrier,
            mode: SyncMode::Sync,
            primary: SyncUnit::all_threads(),
            secondary: SyncUnit::all_threads(),
            operation: None,
            data: Vec::new(),
            implicit,
            body: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtValue {
    Str(String),
    Expr(Expr),
    Symbols(Vec<String>),
}

/// Key-value extension op; never interpreted by core passes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtensionNode {
    pub entries: BTreeMap<String, ExtValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfNode {
    pub cond: Expr,
    pub then_region: Region,
    pub else_region: Option<Region>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseForNode {
    pub var: String,
    pub declares: bool,
    pub init: Expr,
    pub cond: Expr,
    pub step: Expr,
    pub body: Region,
}

// ---------------------------------------------------------------------------
// Data attributes (the six-field records)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldState<T> {
    #[default]
    Unknown,
    Known(T),
}

impl<T> FieldState<T> {
    pub fn known(&self) -> Option<&T> {
        match self {
            FieldState::Unknown => None,
            FieldState::Known(v) => Some(v),
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, FieldState::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Implicit,
    Explicit,
}

impl Visibility {
    pub fn keyword(&self) -> &'static str {
        match self {
            Visibility::Implicit => "implicit",
            Visibility::Explicit => "explicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharingProp {
    Shared,
    Private,
    Firstprivate,
    Lastprivate,
}

impl SharingProp {
    pub fn keyword(&self) -> &'static str {
        match self {
            SharingProp::Shared => "shared",
            SharingProp::Private => "private",
            SharingProp::Firstprivate => "firstprivate",
            SharingProp::Lastprivate => "lastprivate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sharing {
    pub property: SharingProp,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingProp {
    To,
    From,
    ToFrom,
    Allocate,
    None,
}

impl MappingProp {
    pub fn keyword(&self) -> &'static str {
        match self {
            MappingProp::To => "to",
            MappingProp::From => "from",
            MappingProp::ToFrom => "tofrom",
            MappingProp::Allocate => "allocate",
            MappingProp::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub property: MappingProp,
    pub visibility: Visibility,
    pub mapper: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    ReadOnly,
    WriteOnly,
    ReadWrite,
}

impl Access {
    pub fn keyword(&self) -> &'static str {
        match self {
            Access::ReadOnly => "read-only",
            Access::WriteOnly => "write-only",
            Access::ReadWrite => "read-write",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionPattern {
    Block,
    Cyclic,
    Linear,
    Loop,
}

impl DistributionPattern {
    pub fn keyword(&self) -> &'static str {
        match self {
            DistributionPattern::Block => "block",
            DistributionPattern::Cyclic => "cyclic",
            DistributionPattern::Linear => "linear",
            DistributionPattern::Loop => "loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub unit_id: Option<Expr>,
    pub pattern: DistributionPattern,
    pub section: Vec<ArraySection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllocatorAttr {
    Default,
    LargeCap,
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeallocatorAttr {
    Default,
    LargeCap,
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemcpyAttr {
    Default,
    Custom(String),
}

/// Per-symbol data attribute record. Fields start unknown and are completed
/// by the data-attribute analysis; user clauses arrive already known with
/// explicit visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct DataItem {
    pub symbol: String,
    pub sharing: FieldState<Sharing>,
    pub mapping: FieldState<Mapping>,
    pub access: FieldState<Access>,
    pub distribution: FieldState<Distribution>,
    pub allocator: FieldState<AllocatorAttr>,
    pub deallocator: FieldState<DeallocatorAttr>,
    pub memcpy: FieldState<MemcpyAttr>,
}

impl DataItem {
    pub fn unknown(symbol: impl Into<String>) -> Self {
        DataItem {
            symbol: symbol.into(),
            sharing: FieldState::Unknown,
            mapping: FieldState::Unknown,
            access: FieldState::Unknown,
            distribution: FieldState::Unknown,
            allocator: FieldState::Unknown,
            deallocator: FieldState::Unknown,
            memcpy: FieldState::Unknown,
        }
    }

    pub fn has_unknown_field(&self) -> bool {
        self.sharing.is_unknown()
            || self.mapping.is_unknown()
            || self.access.is_unknown()
            || self.distribution.is_unknown()
            || self.allocator.is_unknown()
            || self.deallocator.is_unknown()
            || self.memcpy.is_unknown()
    }
}

// ---------------------------------------------------------------------------
// Traversal helpers
// ---------------------------------------------------------------------------

impl Node {
    /// Child regions in canonical traversal order.
    pub fn regions(&self) -> Vec<&Region> {
        match &self.kind {
            NodeKind::Spmd(n) => vec![&n.body],
            NodeKind::Loop(n) => vec![&n.body],
            NodeKind::Task(n) => vec![&n.body],
            NodeKind::DataRegion(n) => vec![&n.body],
            NodeKind::Sync(n) => n.body.iter().collect(),
            NodeKind::If(n) => {
                let mut v = vec![&n.then_region];
                if let Some(e) = &n.else_region {
                    v.push(e);
                }
                v
            }
            NodeKind::BaseFor(n) => vec![&n.body],
            _ => Vec::new(),
        }
    }

    pub fn regions_mut(&mut self) -> Vec<&mut Region> {
        match &mut self.kind {
            NodeKind::Spmd(n) => vec![&mut n.body],
            NodeKind::Loop(n) => vec![&mut n.body],
            NodeKind::Task(n) => vec![&mut n.body],
            NodeKind::DataRegion(n) => vec![&mut n.body],
            NodeKind::Sync(n) => n.body.iter_mut().collect(),
            NodeKind::If(n) => {
                let mut v = vec![&mut n.then_region];
                if let Some(e) = &mut n.else_region {
                    v.push(e);
                }
                v
            }
            NodeKind::BaseFor(n) => vec![&mut n.body],
            _ => Vec::new(),
        }
    }
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&UpirFunction> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Visit every node pre-order, functions in order.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Node)) {
        fn go<'a>(region: &'a Region, visit: &mut impl FnMut(&'a Node)) {
            for node in &region.nodes {
                visit(node);
                for r in node.regions() {
                    go(r, visit);
                }
            }
        }
        for f in &self.functions {
            go(&f.body, visit);
        }
    }

    pub fn walk_mut(&mut self, visit: &mut impl FnMut(&mut Node)) {
        fn go(region: &mut Region, visit: &mut impl FnMut(&mut Node)) {
            for node in &mut region.nodes {
                visit(node);
                for r in node.regions_mut() {
                    go(r, visit);
                }
            }
        }
        for f in &mut self.functions {
            go(&mut f.body, visit);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    pub fn find_node(&self, id: NodeId) -> Option<&Node> {
        let mut found = None;
        self.walk(&mut |n| {
            if n.id == id && found.is_none() {
                found = Some(n);
            }
        });
        found
    }

    /// Count of barrier sync nodes; used by the elimination tests.
    pub fn barrier_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |node| {
            if matches!(&node.kind, NodeKind::Sync(s) if s.name == SyncName::Barrier) {
                n += 1;
            }
        });
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;

    const AXPY_OMP: &str = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma omp target parallel for num_threads(1024)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";

    const AXPY_ACC: &str = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma acc parallel loop num_workers(1024)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";

    fn build_of(src: &str) -> Module {
        build_upir(&parse_kernel_source(src).unwrap()).unwrap()
    }

    #[test]
    fn axpy_maps_to_task_spmd_loop() {
        let m = build_of(AXPY_OMP);
        let f = &m.functions[0];
        let NodeKind::Task(task) = &f.body.nodes[0].kind else { panic!("expected task") };
        assert_eq!(task.kind, TaskKind::Offload);
        assert_eq!(task.device, Some((Device::Nvptx, 0)));
        let NodeKind::Spmd(spmd) = &task.body.nodes[0].kind else { panic!("expected spmd") };
        assert_eq!(spmd.num_units.as_ref().unwrap().as_int_const(), Some(1024));
        assert!(spmd.num_teams.is_none());
        let NodeKind::Loop(l) = &spmd.body.nodes[0].kind else { panic!("expected loop") };
        let Some(LoopParallel { kind: LoopParKind::Worksharing { distribute, .. } }) = &l.parallel else {
            panic!("expected worksharing")
        };
        assert_eq!(*distribute, DistributeTarget::Units);
    }

    #[test]
    fn axpy_unifies_across_models_pre_analysis() {
        let omp = canonicalize(&build_of(AXPY_OMP));
        let acc = canonicalize(&build_of(AXPY_ACC));
        assert_eq!(omp, acc);
        assert_eq!(print_upir(&omp).unwrap(), print_upir(&acc).unwrap());
    }

    #[test]
    fn print_parse_round_trip() {
        let m = canonicalize(&build_of(AXPY_OMP));
        let text = print_upir(&m).unwrap();
        let back = parse_upir(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(back, m, "\n{text}");
        assert_eq!(print_upir(&back).unwrap(), text);
    }

    #[test]
    fn empty_module_prints_header_footer() {
        let m = Module::default();
        assert_eq!(print_upir(&m).unwrap(), "module {\n}\n");
        assert_eq!(parse_upir("module {\n}\n").unwrap(), m);
    }

    #[test]
    fn worksharing_outside_spmd_rejected() {
        let text = "\
module {
  func @f(%n : int) {
    upir.loop induction(%i) lowerBound(%c0) upperBound(%n) step(%c1) collapse(1) {
      upir.loop_parallel worksharing(schedule(static) distribute(units)) {
      }
    }
  }
}
";
        let err = parse_upir(text).unwrap_err();
        assert!(err.msg.contains("SPMD"), "{err}");
    }

    #[test]
    fn cuda_launch_shape() {
        let src = "\
__global__ void axpy_kernel(float x[], float y[], float a, int n) {
  int i = blockDim.x * blockIdx.x + threadIdx.x;
  if (i < n) y[i] = y[i] + a * x[i];
}
void axpy(float d_x[], float d_y[], float a, int n) {
  axpy_kernel<<<(n + 255) / 256, 256>>>(d_x, d_y, a, n);
}
";
        let m = build_of(src);
        let f = m.function("axpy").unwrap();
        assert_eq!(f.body.nodes.len(), 1);
        let NodeKind::Task(task) = &f.body.nodes[0].kind else { panic!("expected task") };
        assert_eq!(task.kind, TaskKind::Offload);
        assert_eq!(task.device, Some((Device::Nvptx, 0)));
        assert_eq!(task.body.nodes.len(), 1, "task body must be exactly one spmd");
        let NodeKind::Spmd(spmd) = &task.body.nodes[0].kind else { panic!("expected spmd") };
        assert_eq!(spmd.num_units.as_ref().unwrap().as_int_const(), Some(256));
        assert_eq!(spmd.body.nodes.len(), 1);
        let NodeKind::Call { callee, args } = &spmd.body.nodes[0].kind else { panic!("expected call") };
        assert_eq!(callee, "axpy_kernel");
        assert_eq!(args.len(), 4);
        // round trip includes the kernel function
        let c = canonicalize(&m);
        let text = print_upir(&c).unwrap();
        assert_eq!(parse_upir(&text).unwrap_or_else(|e| panic!("{e}\n{text}")), c);
    }
}
