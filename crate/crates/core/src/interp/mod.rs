//! Deterministic execution of UPIR with simulated teams and units.
//!
//! The interpreter is single-threaded; concurrency is simulated by a
//! cooperative round-robin scheduler that switches units only at sync points,
//! loop-chunk boundaries, and task spawns. A separate serial oracle ignores
//! all parallel annotations and executes base statements in program order.

mod machine;
mod replay;
mod serial;

pub use machine::{interpret_parallel, trace_schedule};
pub use replay::replay;
pub use serial::interpret_serial;

use crate::ir::{MemSpace, Module, NodeId};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    IntArr { dims: Vec<usize>, data: Vec<i64> },
    FloatArr { dims: Vec<usize>, data: Vec<f64> },
}

impl Value {
    pub fn zero_array(float: bool, dims: Vec<usize>) -> Value {
        let n: usize = dims.iter().product();
        if float {
            Value::FloatArr { dims, data: vec![0.0; n] }
        } else {
            Value::IntArr { dims, data: vec![0; n] }
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self, Value::IntArr { .. } | Value::FloatArr { .. })
    }

    /// Size in bytes for the allocation ledger (8 bytes per element).
    pub fn byte_size(&self) -> i64 {
        match self {
            Value::Int(_) | Value::Float(_) => 8,
            Value::IntArr { data, .. } => 8 * data.len() as i64,
            Value::FloatArr { data, .. } => 8 * data.len() as i64,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join<T: fmt::Display>(xs: &[T]) -> String {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::IntArr { data, .. } => write!(f, "[{}]", join(data)),
            Value::FloatArr { data, .. } => write!(f, "[{}]", join(data)),
        }
    }
}

/// Runtime failure: deadlock, unmapped access, ledger imbalance, and friends.
#[derive(Debug, Clone, PartialEq)]
pub struct RtError(pub String);

impl fmt::Display for RtError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "runtime error: {}", self.0)
    }
}

impl std::error::Error for RtError {}

pub type RtResult<T> = std::result::Result<T, RtError>;

pub(crate) fn rt_err<T>(msg: impl Into<String>) -> RtResult<T> {
    Err(RtError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Parallel,
    Serial,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub mode: Mode,
    /// Forces the unit count of every spmd region when set.
    pub units_override: Option<u32>,
    pub teams_override: Option<u32>,
    /// Unit count when an spmd specifies none and no override is given.
    pub default_units: u32,
    pub collect_trace: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            mode: Mode::Parallel,
            units_override: None,
            teams_override: None,
            default_units: 4,
            collect_trace: true,
        }
    }
}

/// Per-loop per-unit chunk assignment in normalized index space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEvent {
    pub loop_id: NodeId,
    pub team: u32,
    pub unit: u32,
    pub chunk: (i64, i64),
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Final host values of the entry function's parameters.
    pub buffers: BTreeMap<String, Value>,
    pub trace: Vec<String>,
    pub schedule_log: Vec<ScheduleEvent>,
    pub warnings: Vec<String>,
}

/// Execute `entry` with the given parameter bindings.
pub fn interpret(
    module: &Module,
    entry: &str,
    inputs: &BTreeMap<String, Value>,
    opts: &Options,
) -> RtResult<Outcome> {
    match opts.mode {
        Mode::Parallel => interpret_parallel(module, entry, inputs, opts),
        Mode::Serial => interpret_serial(module, entry, inputs),
    }
}

pub(crate) fn space_name(space: &MemSpace) -> String {
    space.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::ir::build_upir;

    fn module_of(src: &str) -> Module {
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        analysis::run_all(&m).unwrap()
    }

    fn farr(xs: &[f64]) -> Value {
        Value::FloatArr { dims: vec![xs.len()], data: xs.to_vec() }
    }

    fn iarr(xs: &[i64]) -> Value {
        Value::IntArr { dims: vec![xs.len()], data: xs.to_vec() }
    }

    const AXPY: &str = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma omp target parallel for num_threads(8)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";

    fn axpy_inputs() -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("x".to_string(), farr(&[1.0, 2.0, 3.0, 4.0])),
            ("y".to_string(), farr(&[1.0, 1.0, 1.0, 1.0])),
            ("a".to_string(), Value::Float(2.0)),
            ("n".to_string(), Value::Int(4)),
        ])
    }

    #[test]
    fn axpy_parallel_and_serial_agree() {
        let m = module_of(AXPY);
        let expected = farr(&[3.0, 5.0, 7.0, 9.0]);
        for mode in [Mode::Parallel, Mode::Serial] {
            let opts = Options { mode, ..Options::default() };
            let out = interpret(&m, "axpy", &axpy_inputs(), &opts).unwrap();
            assert_eq!(out.buffers["y"], expected, "{mode:?}");
        }
    }

    #[test]
    fn axpy_across_unit_counts() {
        let m = module_of(AXPY);
        let serial =
            interpret(&m, "axpy", &axpy_inputs(), &Options { mode: Mode::Serial, ..Options::default() })
                .unwrap();
        for p in [1u32, 2, 3, 8] {
            let opts = Options { units_override: Some(p), ..Options::default() };
            let par = interpret(&m, "axpy", &axpy_inputs(), &opts).unwrap();
            assert_eq!(par.buffers["y"], serial.buffers["y"], "p={p}");
        }
    }

    #[test]
    fn reduction_sums_to_55() {
        let src = "\
void sumto(int r[], int n) {
  int sum = 0;
  #pragma omp parallel for reduction(+: sum) num_threads(3)
  for (int i = 1; i <= n; i++)
    sum += i;
  r[0] = sum;
}
";
        let m = module_of(src);
        let inputs =
            BTreeMap::from([("r".to_string(), iarr(&[0])), ("n".to_string(), Value::Int(10))]);
        for p in [1u32, 2, 3, 8] {
            let opts = Options { units_override: Some(p), ..Options::default() };
            let out = interpret(&m, "sumto", &inputs, &opts).unwrap();
            assert_eq!(out.buffers["r"], iarr(&[55]), "p={p}");
        }
        let serial =
            interpret(&m, "sumto", &inputs, &Options { mode: Mode::Serial, ..Options::default() })
                .unwrap();
        assert_eq!(serial.buffers["r"], iarr(&[55]));
    }

    #[test]
    fn cuda_launch_runs() {
        let src = "\
__global__ void axpy_kernel(float x[], float y[], float a, int n) {
  int i = blockDim.x * blockIdx.x + threadIdx.x;
  if (i < n) y[i] = y[i] + a * x[i];
}
void axpy(float d_x[], float d_y[], float a, int n) {
  axpy_kernel<<<(n + 255) / 256, 256>>>(d_x, d_y, a, n);
}
";
        let m = module_of(src);
        let inputs = BTreeMap::from([
            ("d_x".to_string(), farr(&[1.0, 2.0, 3.0, 4.0])),
            ("d_y".to_string(), farr(&[1.0, 1.0, 1.0, 1.0])),
            ("a".to_string(), Value::Float(2.0)),
            ("n".to_string(), Value::Int(4)),
        ]);
        let out = interpret(&m, "axpy", &inputs, &Options::default()).unwrap();
        assert_eq!(out.buffers["d_y"], farr(&[3.0, 5.0, 7.0, 9.0]));
        // offload mapping shows up in the trace and the ledger balances
        assert!(out.trace.iter().any(|t| t.contains("map_enter")));
        assert!(out.trace.iter().any(|t| t.contains("map_exit")));
    }

    #[test]
    fn deterministic_traces() {
        let m = module_of(AXPY);
        let opts = Options { units_override: Some(3), ..Options::default() };
        let a = interpret(&m, "axpy", &axpy_inputs(), &opts).unwrap();
        let b = interpret(&m, "axpy", &axpy_inputs(), &opts).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(!a.trace.is_empty());
    }

    #[test]
    fn static_schedule_log_matches_compute_schedule() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let m = module_of(src);
        let inputs =
            BTreeMap::from([("y".to_string(), iarr(&[0; 10])), ("n".to_string(), Value::Int(10))]);
        let log = trace_schedule(&m, "f", &inputs, 3).unwrap();
        let mut per_unit: Vec<Vec<(i64, i64)>> = vec![Vec::new(); 3];
        for ev in &log {
            per_unit[ev.unit as usize].push(ev.chunk);
        }
        assert_eq!(per_unit[0], vec![(0, 4)]);
        assert_eq!(per_unit[1], vec![(4, 7)]);
        assert_eq!(per_unit[2], vec![(7, 10)]);
    }

    #[test]
    fn dynamic_units_alternate() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let m = module_of(src);
        let inputs =
            BTreeMap::from([("y".to_string(), iarr(&[0; 4])), ("n".to_string(), Value::Int(4))]);
        let log = trace_schedule(&m, "f", &inputs, 2).unwrap();
        let seq: Vec<(u32, (i64, i64))> = log.iter().map(|e| (e.unit, e.chunk)).collect();
        assert_eq!(seq, vec![(0, (0, 1)), (1, (1, 2)), (0, (2, 3)), (1, (3, 4))]);
    }

    #[test]
    fn empty_trip_count_empty_log() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let m = module_of(src);
        let inputs =
            BTreeMap::from([("y".to_string(), iarr(&[0])), ("n".to_string(), Value::Int(0))]);
        let log = trace_schedule(&m, "f", &inputs, 2).unwrap();
        assert!(log.is_empty(), "{log:?}");
    }

    #[test]
    fn missing_binding_rejected() {
        let m = module_of(AXPY);
        let err = interpret(&m, "axpy", &BTreeMap::new(), &Options::default()).unwrap_err();
        assert!(err.0.contains("missing input binding"), "{err}");
    }
}
