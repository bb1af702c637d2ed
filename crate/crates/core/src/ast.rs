//! AST of the mini kernel language, plus the directive records attached to it.
//!
//! Expressions are shared with the IR: node fields such as loop bounds and
//! unit counts are `Expr` values.

use crate::diag::Pos;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    Int,
    Float,
    Double,
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarType::Int => write!(f, "int"),
            ScalarType::Float => write!(f, "float"),
            ScalarType::Double => write!(f, "double"),
        }
    }
}

/// Parameter/variable type: scalar or 1-D/2-D array of scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Type {
    pub elem: ScalarType,
    /// 0 = scalar, 1 = `t x[]`, 2 = `t x[][]`.
    pub rank: u8,
}

impl Type {
    pub fn scalar(elem: ScalarType) -> Self {
        Type { elem, rank: 0 }
    }

    pub fn is_int_scalar(&self) -> bool {
        self.rank == 0 && self.elem == ScalarType::Int
    }

    pub fn is_float(&self) -> bool {
        matches!(self.elem, ScalarType::Float | ScalarType::Double)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.elem)?;
        for _ in 0..self.rank {
            write!(f, "[]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn is_comparison(&self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

/// Execution-context intrinsics of the kernel language. CUDA's
/// `threadIdx.x`/`blockIdx.x`/`blockDim.x` are rewritten to these during
/// parsing so every frontend shares one spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intrinsic {
    UnitId,
    TeamId,
    UnitsPerTeam,
}

impl Intrinsic {
    pub fn name(&self) -> &'static str {
        match self {
            Intrinsic::UnitId => "__unit_id",
            Intrinsic::TeamId => "__team_id",
            Intrinsic::UnitsPerTeam => "__units_per_team",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i64),
    FloatLit(f64),
    Ident(String),
    /// 1-D or 2-D array element access.
    Index { base: String, indices: Vec<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Neg(Box<Expr>),
    Intrinsic(Intrinsic),
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::IntLit(v)
    }

    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn as_int_const(&self) -> Option<i64> {
        match self {
            Expr::IntLit(v) => Some(*v),
            Expr::Neg(e) => e.as_int_const().map(|v| -v),
            _ => None,
        }
    }

    /// All identifiers read by this expression (array bases included).
    pub fn referenced_symbols(&self, out: &mut Vec<String>) {
        match self {
            Expr::IntLit(_) | Expr::FloatLit(_) | Expr::Intrinsic(_) => {}
            Expr::Ident(n) => out.push(n.clone()),
            Expr::Index { base, indices } => {
                out.push(base.clone());
                for i in indices {
                    i.referenced_symbols(out);
                }
            }
            Expr::Binary { lhs, rhs, .. } => {
                lhs.referenced_symbols(out);
                rhs.referenced_symbols(out);
            }
            Expr::Neg(e) => e.referenced_symbols(out),
        }
    }

    pub fn reads_unit_intrinsic(&self) -> bool {
        match self {
            Expr::Intrinsic(Intrinsic::UnitId) | Expr::Intrinsic(Intrinsic::TeamId) => true,
            Expr::Intrinsic(Intrinsic::UnitsPerTeam) => false,
            Expr::IntLit(_) | Expr::FloatLit(_) | Expr::Ident(_) => false,
            Expr::Index { indices, .. } => indices.iter().any(|e| e.reads_unit_intrinsic()),
            Expr::Binary { lhs, rhs, .. } => lhs.reads_unit_intrinsic() || rhs.reads_unit_intrinsic(),
            Expr::Neg(e) => e.reads_unit_intrinsic(),
        }
    }

    /// Constant-fold integer arithmetic and unit/zero identities.
    pub fn fold(self) -> Expr {
        match self {
            Expr::Binary { op, lhs, rhs } => {
                let lhs = lhs.fold();
                let rhs = rhs.fold();
                if let (Some(a), Some(b)) = (lhs.as_int_const(), rhs.as_int_const()) {
                    let val = match op {
                        BinOp::Add => Some(a + b),
                        BinOp::Sub => Some(a - b),
                        BinOp::Mul => Some(a * b),
                        BinOp::Div if b != 0 => Some(a / b),
                        BinOp::Rem if b != 0 => Some(a % b),
                        _ => None,
                    };
                    if let Some(v) = val {
                        return Expr::IntLit(v);
                    }
                }
                match (op, lhs.as_int_const(), rhs.as_int_const()) {
                    (BinOp::Add, Some(0), _) => return rhs,
                    (BinOp::Add | BinOp::Sub, _, Some(0)) => return lhs,
                    (BinOp::Mul, Some(1), _) => return rhs,
                    (BinOp::Mul | BinOp::Div, _, Some(1)) => return lhs,
                    (BinOp::Mul, Some(0), _) | (BinOp::Mul, _, Some(0)) => return Expr::IntLit(0),
                    _ => {}
                }
                Expr::bin(op, lhs, rhs)
            }
            Expr::Neg(e) => {
                let e = e.fold();
                match e.as_int_const() {
                    Some(v) => Expr::IntLit(-v),
                    None => Expr::Neg(Box::new(e)),
                }
            }
            other => other,
        }
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } if op.is_comparison() => 1,
            Expr::Binary { op: BinOp::Add | BinOp::Sub, .. } => 2,
            Expr::Binary { .. } => 3,
            Expr::Neg(_) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::IntLit(v) => write!(f, "{v}")?,
            // Debug form keeps a trailing `.0` so the literal re-lexes as a float.
            Expr::FloatLit(v) => write!(f, "{v:?}")?,
            Expr::Ident(n) => write!(f, "{n}")?,
            Expr::Index { base, indices } => {
                write!(f, "{base}")?;
                for i in indices {
                    write!(f, "[{i}]")?;
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                // Comparisons do not chain, so both sides of one need parens.
                let lmin = if op.is_comparison() { prec + 1 } else { prec };
                lhs.fmt_prec(f, lmin)?;
                write!(f, " {} ", op.symbol())?;
                rhs.fmt_prec(f, prec + 1)?;
            }
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, prec)?;
            }
            Expr::Intrinsic(i) => write!(f, "{}()", i.name())?,
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Kernel-language rendering with minimal parentheses.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Left-hand side of an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub base: String,
    pub indices: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    /// Attached directives, ordered outermost to innermost.
    pub directives: Vec<Directive>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl { ty: ScalarType, name: String, init: Option<Expr> },
    Assign { lhs: LValue, rhs: Expr },
    For(Box<ForStmt>),
    If { cond: Expr, then_branch: Box<Stmt>, else_branch: Option<Box<Stmt>> },
    Block(Vec<Stmt>),
    Call { callee: String, args: Vec<Expr>, launch: Option<(Expr, Expr)> },
    Return(Option<Expr>),
    /// Carrier for standalone directives (barrier, taskwait, update, wait);
    /// these attach to no other statement.
    Empty,
}

/// `for (init; cond; incr)` in the fixed syntactic shape the language allows:
/// one induction variable, an optional declaration, a comparison condition,
/// and an additive increment.
#[derive(Debug, Clone, PartialEq)]
pub struct ForStmt {
    pub var: String,
    pub declares: bool,
    pub init: Expr,
    pub cond: Expr,
    /// Signed amount added to `var` each iteration.
    pub step: Expr,
    pub body: Stmt,
}

impl ForStmt {
    /// Canonical loops have the form `var <cmp> bound` (or mirrored) with
    /// integer, var-independent bound and step.
    pub fn is_canonical(&self) -> bool {
        self.canonical_cmp().is_some()
    }

    /// Returns (comparison op, bound expr) with the induction variable on the
    /// left, or None when the loop is non-canonical.
    pub fn canonical_cmp(&self) -> Option<(BinOp, &Expr)> {
        let Expr::Binary { op, lhs, rhs } = &self.cond else {
            return None;
        };
        if !op.is_comparison() || matches!(op, BinOp::Eq | BinOp::Ne) {
            return None;
        }
        let var_on_left = matches!(&**lhs, Expr::Ident(n) if *n == self.var);
        let var_on_right = matches!(&**rhs, Expr::Ident(n) if *n == self.var);
        let mut bound_syms = Vec::new();
        if var_on_left {
            rhs.referenced_symbols(&mut bound_syms);
            if bound_syms.contains(&self.var) {
                return None;
            }
            Some((*op, rhs))
        } else if var_on_right {
            lhs.referenced_symbols(&mut bound_syms);
            if bound_syms.contains(&self.var) {
                return None;
            }
            let mirrored = match op {
                BinOp::Lt => BinOp::Gt,
                BinOp::Le => BinOp::Ge,
                BinOp::Gt => BinOp::Lt,
                BinOp::Ge => BinOp::Le,
                _ => unreachable!(),
            };
            Some((mirrored, lhs))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<ScalarType>,
    /// Marked `__global__` in source; only kernels may be chevron-launched.
    pub is_kernel: bool,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub functions: Vec<Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

// ---------------------------------------------------------------------------
// Directives
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceLanguage {
    OpenMp,
    OpenAcc,
    CudaLaunch,
}

/// Construct keywords, shared across the OpenMP and OpenACC vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construct {
    // OpenMP
    Target,
    Teams,
    Distribute,
    Parallel,
    For,
    Simd,
    Task,
    Taskloop,
    Barrier,
    Taskwait,
    Critical,
    Atomic,
    Single,
    Data,
    Update,
    // OpenACC
    Loop,
    Wait,
}

impl Construct {
    pub fn keyword(&self) -> &'static str {
        match self {
            Construct::Target => "target",
            Construct::Teams => "teams",
            Construct::Distribute => "distribute",
            Construct::Parallel => "parallel",
            Construct::For => "for",
            Construct::Simd => "simd",
            Construct::Task => "task",
            Construct::Taskloop => "taskloop",
            Construct::Barrier => "barrier",
            Construct::Taskwait => "taskwait",
            Construct::Critical => "critical",
            Construct::Atomic => "atomic",
            Construct::Single => "single",
            Construct::Data => "data",
            Construct::Update => "update",
            Construct::Loop => "loop",
            Construct::Wait => "wait",
        }
    }

    /// Constructs that bind to a for statement.
    pub fn is_loop_binding(&self) -> bool {
        matches!(
            self,
            Construct::For | Construct::Distribute | Construct::Simd | Construct::Taskloop | Construct::Loop
        )
    }

    /// Standalone directives attach to no statement.
    pub fn is_standalone(&self) -> bool {
        matches!(self, Construct::Barrier | Construct::Taskwait | Construct::Update | Construct::Wait)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionOp {
    Add,
    Sub,
    Mul,
    Min,
    Max,
}

impl ReductionOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            ReductionOp::Add => "+",
            ReductionOp::Sub => "-",
            ReductionOp::Mul => "*",
            ReductionOp::Min => "min",
            ReductionOp::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<ReductionOp> {
        match s {
            "+" => Some(ReductionOp::Add),
            "-" => Some(ReductionOp::Sub),
            "*" => Some(ReductionOp::Mul),
            "min" => Some(ReductionOp::Min),
            "max" => Some(ReductionOp::Max),
            _ => None,
        }
    }
}

/// `[lower : length : stride]`; stride defaults to 1, length to the full
/// remaining extent.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySection {
    pub lower: Expr,
    pub length: Option<Expr>,
    pub stride: Option<Expr>,
}

/// A clause variable: plain symbol or symbol with array sections.
#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub sections: Vec<ArraySection>,
}

impl VarRef {
    pub fn plain(name: impl Into<String>) -> Self {
        VarRef { name: name.into(), sections: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePolicy {
    Static,
    Dynamic,
    Guided,
    Runtime,
    Auto,
}

impl SchedulePolicy {
    pub fn keyword(&self) -> &'static str {
        match self {
            SchedulePolicy::Static => "static",
            SchedulePolicy::Dynamic => "dynamic",
            SchedulePolicy::Guided => "guided",
            SchedulePolicy::Runtime => "runtime",
            SchedulePolicy::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    To,
    From,
    ToFrom,
    Alloc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    NumThreads(Expr),
    NumTeams(Expr),
    NumGangs(Expr),
    NumWorkers(Expr),
    VectorLength(Expr),
    Schedule { policy: SchedulePolicy, chunk: Option<Expr> },
    Collapse(i64),
    Simdlen(Expr),
    Grainsize(Expr),
    NumTasks(Expr),
    Reduction { op: ReductionOp, vars: Vec<VarRef> },
    Map { kind: MapKind, vars: Vec<VarRef> },
    Private(Vec<VarRef>),
    Firstprivate(Vec<VarRef>),
    Lastprivate(Vec<VarRef>),
    Shared(Vec<VarRef>),
    Depend { mode: DependMode, vars: Vec<VarRef> },
    Device(Expr),
    Nowait,
    /// OpenACC gang/worker/vector markers on `loop`.
    Gang,
    Worker,
    Vector,
    /// OpenACC data clauses map onto `Map` kinds during building.
    Copyin(Vec<VarRef>),
    Copyout(Vec<VarRef>),
    Copy(Vec<VarRef>),
    Create(Vec<VarRef>),
    Async(Option<Expr>),
    WaitClause(Option<Expr>),
    /// Update direction lists: `to`/`device` move host->device, `from`/`self`
    /// move device->host.
    UpdateTo(Vec<VarRef>),
    UpdateFrom(Vec<VarRef>),
    Policy(TaskPolicy),
    /// Well-formed but unsupported clause, preserved verbatim.
    Extension { name: String, payload: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependMode {
    In,
    Out,
    InOut,
}

impl DependMode {
    pub fn keyword(&self) -> &'static str {
        match self {
            DependMode::In => "in",
            DependMode::Out => "out",
            DependMode::InOut => "inout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPolicy {
    HelpFirst,
    WorkFirst,
}

impl TaskPolicy {
    pub fn keyword(&self) -> &'static str {
        match self {
            TaskPolicy::HelpFirst => "help-first",
            TaskPolicy::WorkFirst => "work-first",
        }
    }
}

/// A parsed, language-tagged construct+clause record.
#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub source_language: SourceLanguage,
    /// Ordered outermost-to-innermost for combined forms.
    pub constructs: Vec<Construct>,
    pub clauses: Vec<Clause>,
    /// Name argument of `critical(name)` when present.
    pub construct_arg: Option<String>,
    /// (grid, block) for cuda-launch.
    pub launch_config: Option<(Expr, Expr)>,
    pub pos: Pos,
}

impl Directive {
    pub fn has_construct(&self, c: Construct) -> bool {
        self.constructs.contains(&c)
    }

    pub fn needs_loop(&self) -> bool {
        self.constructs.iter().any(|c| c.is_loop_binding())
    }

    pub fn is_standalone(&self) -> bool {
        self.constructs.iter().any(|c| c.is_standalone())
    }
}
