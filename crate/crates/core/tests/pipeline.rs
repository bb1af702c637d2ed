//! Cross-module pipeline tests: build + analyses + transforms + interpreter
//! working together on realistic kernels.

use std::collections::BTreeMap;
use upir_core::analysis;
use upir_core::frontend::parse_kernel_source;
use upir_core::interp::{interpret, Mode, Options, Value};
use upir_core::ir::{self, Module};
use upir_core::passes;

fn pipeline(src: &str) -> Module {
    let p = parse_kernel_source(src).unwrap_or_else(|e| panic!("{e}"));
    analysis::run_all(&ir::build_upir(&p).unwrap()).unwrap()
}

fn iarr(xs: &[i64]) -> Value {
    Value::IntArr { dims: vec![xs.len()], data: xs.to_vec() }
}

fn serial(m: &Module, entry: &str, inputs: &BTreeMap<String, Value>) -> BTreeMap<String, Value> {
    interpret(m, entry, inputs, &Options { mode: Mode::Serial, collect_trace: false, ..Options::default() })
        .unwrap()
        .buffers
}

fn parallel(m: &Module, entry: &str, inputs: &BTreeMap<String, Value>, p: u32) -> BTreeMap<String, Value> {
    let opts = Options { units_override: Some(p), collect_trace: false, ..Options::default() };
    interpret(m, entry, inputs, &opts).unwrap().buffers
}

#[test]
fn dynamic_and_guided_schedules_match_serial() {
    for policy in ["dynamic, 2", "guided", "dynamic", "guided, 3"] {
        let src = format!(
            "void f(int y[], int n) {{\n#pragma omp parallel for schedule({policy})\nfor (int i = 0; i < n; i++)\ny[i] = i * i;\n}}"
        );
        let m = pipeline(&src);
        let inputs =
            BTreeMap::from([("y".to_string(), iarr(&[0; 37])), ("n".to_string(), Value::Int(37))]);
        let want = serial(&m, "f", &inputs);
        for p in [1u32, 3, 8] {
            assert_eq!(parallel(&m, "f", &inputs, p), want, "schedule({policy}) p={p}");
        }
    }
}

#[test]
fn runtime_and_auto_resolve_to_static_with_warning() {
    let src = "void f(int y[], int n) {\n#pragma omp parallel for schedule(runtime)\nfor (int i = 0; i < n; i++)\ny[i] = i;\n}";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0; 10])), ("n".to_string(), Value::Int(10))]);
    let opts = Options { units_override: Some(3), ..Options::default() };
    let out = interpret(&m, "f", &inputs, &opts).unwrap();
    assert!(out.warnings.iter().any(|w| w.contains("resolves to static")), "{:?}", out.warnings);
    assert_eq!(out.buffers["y"], iarr(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]));
}

#[test]
fn collapse_pass_preserves_matmul_results() {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/matmul_int.ukl"
    ))
    .unwrap();
    let m = pipeline(&src);
    let collapsed = passes::collapse_loops(&m).unwrap();
    ir::validate(&collapsed).unwrap();
    let n = 8usize;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for j in 0..n {
            a.push(((i + 2 * j) % 5) as i64);
            b.push(((i * j + 1) % 7) as i64);
        }
    }
    let inputs = BTreeMap::from([
        ("a".to_string(), Value::IntArr { dims: vec![n, n], data: a }),
        ("b".to_string(), Value::IntArr { dims: vec![n, n], data: b }),
        ("c".to_string(), Value::IntArr { dims: vec![n, n], data: vec![0; n * n] }),
        ("n".to_string(), Value::Int(n as i64)),
    ]);
    let want = serial(&m, "matmul", &inputs);
    for p in [1u32, 3] {
        assert_eq!(parallel(&collapsed, "matmul", &inputs, p), want, "collapsed p={p}");
    }
    // the collapsed module still round-trips
    let canon = ir::canonicalize(&collapsed);
    let text = ir::print_upir(&canon).unwrap();
    assert_eq!(ir::parse_upir(&text).unwrap(), canon);
}

#[test]
fn acc_async_wait_pipeline() {
    let src = "\
void f(float x[], int n) {
  #pragma acc parallel loop num_workers(4) async
  for (int i = 0; i < n; i++)
    x[i] = x[i] + 1;
  #pragma acc wait
}
";
    let m = pipeline(src);
    // async marks the offload task; wait becomes a taskwait sync
    let mut saw_async = false;
    let mut saw_taskwait = false;
    m.walk(&mut |node| match &node.kind {
        ir::NodeKind::Task(t) => saw_async |= t.is_async,
        ir::NodeKind::Sync(s) => saw_taskwait |= s.name == ir::SyncName::Taskwait,
        _ => {}
    });
    assert!(saw_async && saw_taskwait);
    let inputs = BTreeMap::from([
        ("x".to_string(), Value::FloatArr { dims: vec![3], data: vec![1.0, 2.0, 3.0] }),
        ("n".to_string(), Value::Int(3)),
    ]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    assert_eq!(out.buffers["x"], Value::FloatArr { dims: vec![3], data: vec![2.0, 3.0, 4.0] });
    // acc unparse round-trips with the async clause intact
    let acc = passes::unparse_to_openacc(&m).unwrap();
    assert!(acc.contains("async"), "{acc}");
    let rebuilt = pipeline(&acc);
    assert_eq!(
        ir::print_upir(&ir::canonicalize(&m)).unwrap(),
        ir::print_upir(&ir::canonicalize(&rebuilt)).unwrap(),
        "{acc}"
    );
}

#[test]
fn atomic_increment_counts_units() {
    let src = "\
void f(int y[]) {
  #pragma omp parallel num_threads(5)
  {
    #pragma omp atomic
    y[0] = y[0] + 1;
  }
}
";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0]))]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    assert_eq!(out.buffers["y"], iarr(&[5]));
    // and the construct unparses back to OpenMP
    let omp = passes::unparse_to_openmp(&m).unwrap();
    assert!(omp.contains("#pragma omp atomic"), "{omp}");
    let rebuilt = pipeline(&omp);
    assert_eq!(
        ir::print_upir(&ir::canonicalize(&m)).unwrap(),
        ir::print_upir(&ir::canonicalize(&rebuilt)).unwrap()
    );
}

#[test]
fn critical_and_single_unparse_round_trip() {
    let src = "\
void f(int y[]) {
  #pragma omp parallel num_threads(3)
  {
    #pragma omp single
    y[0] = y[0] + 1;
    #pragma omp critical(update)
    y[1] = y[1] + 1;
  }
}
";
    let m = pipeline(src);
    let omp = passes::unparse_to_openmp(&m).unwrap();
    assert!(omp.contains("#pragma omp single"), "{omp}");
    assert!(omp.contains("#pragma omp critical(update)"), "{omp}");
    let rebuilt = pipeline(&omp);
    assert_eq!(
        ir::print_upir(&ir::canonicalize(&m)).unwrap(),
        ir::print_upir(&ir::canonicalize(&rebuilt)).unwrap(),
        "{omp}"
    );
}

#[test]
fn acc_dialect_export_covers_kernel_corpus() {
    for name in ["axpy_acc.ukl", "matvec_acc.ukl", "stencil_acc.ukl", "matmul_acc.ukl"] {
        let src = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name),
        )
        .unwrap();
        let m = pipeline(&src);
        let text = passes::export_acc_dialect(&m).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(text.contains("acc.parallel"), "{name}:\n{text}");
        assert!(text.contains("scf.for"), "{name}:\n{text}");
    }
}

#[test]
fn teams_distribute_interprets_correctly() {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/matmul_int.ukl"
    ))
    .unwrap();
    let m = pipeline(&src);
    let n = 6usize;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for j in 0..n {
            a.push((i * 3 + j) as i64 % 4);
            b.push((i + j * 2) as i64 % 5);
        }
    }
    let inputs = BTreeMap::from([
        ("a".to_string(), Value::IntArr { dims: vec![n, n], data: a }),
        ("b".to_string(), Value::IntArr { dims: vec![n, n], data: b }),
        ("c".to_string(), Value::IntArr { dims: vec![n, n], data: vec![0; n * n] }),
        ("n".to_string(), Value::Int(n as i64)),
    ]);
    let want = serial(&m, "matmul", &inputs);
    // vary teams as well as units
    for teams in [1u32, 2, 3] {
        let opts = Options {
            units_override: Some(2),
            teams_override: Some(teams),
            collect_trace: false,
            ..Options::default()
        };
        let got = interpret(&m, "matmul", &inputs, &opts).unwrap().buffers;
        assert_eq!(got, want, "teams={teams}");
    }
}

#[test]
fn firstprivate_clause_snapshots_value() {
    let src = "\
void f(int y[], int n) {
  int base = 100;
  #pragma omp parallel for firstprivate(base)
  for (int i = 0; i < n; i++)
    y[i] = base + i;
  base = 0;
  y[0] = y[0] + base;
}
";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0; 4])), ("n".to_string(), Value::Int(4))]);
    let want = iarr(&[100, 101, 102, 103]);
    for p in [1u32, 2, 4] {
        assert_eq!(parallel(&m, "f", &inputs, p)["y"], want, "p={p}");
    }
    assert_eq!(serial(&m, "f", &inputs)["y"], want);
}

#[test]
fn chunked_static_schedule_round_robin_interp() {
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel for schedule(static, 2)
  for (int i = 0; i < n; i++)
    y[i] = __unit_id();
}
";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0; 8])), ("n".to_string(), Value::Int(8))]);
    let got = parallel(&m, "f", &inputs, 2);
    // round-robin pairs: unit0 [0,2) [4,6), unit1 [2,4) [6,8)
    assert_eq!(got["y"], iarr(&[0, 0, 1, 1, 0, 0, 1, 1]));
}

#[test]
fn matmul_identity_leaves_operand_unchanged() {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/matmul_int.ukl"
    ))
    .unwrap();
    let m = pipeline(&src);
    let n = 2usize;
    let identity = Value::IntArr { dims: vec![n, n], data: vec![1, 0, 0, 1] };
    let other = Value::IntArr { dims: vec![n, n], data: vec![3, 7, 2, 9] };
    let inputs = BTreeMap::from([
        ("a".to_string(), identity),
        ("b".to_string(), other.clone()),
        ("c".to_string(), Value::IntArr { dims: vec![n, n], data: vec![0; n * n] }),
        ("n".to_string(), Value::Int(n as i64)),
    ]);
    for p in [1u32, 2, 3] {
        assert_eq!(parallel(&m, "matmul", &inputs, p)["c"], other, "p={p}");
    }
    assert_eq!(serial(&m, "matmul", &inputs)["c"], other);
}

#[test]
fn write_only_access_inferred() {
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel for
  for (int i = 0; i < n; i++)
    y[i] = n;
}
";
    let m = pipeline(src);
    let mut access = None;
    m.walk(&mut |node| {
        if let ir::NodeKind::Spmd(s) = &node.kind {
            let item = s.data.iter().find(|i| i.symbol == "y").unwrap();
            access = item.access.known().copied();
        }
    });
    assert_eq!(access, Some(ir::Access::WriteOnly));
}

#[test]
fn unknown_clause_becomes_extension_node_and_survives() {
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel for proc_bind(close) num_threads(2)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
    let m = pipeline(src);
    let mut ext = None;
    m.walk(&mut |node| {
        if let ir::NodeKind::Ext(e) = &node.kind {
            ext = Some(e.clone());
        }
    });
    let ext = ext.expect("extension node present");
    assert_eq!(ext.entries.len(), 1);
    assert!(matches!(ext.entries.get("proc_bind"), Some(ir::ExtValue::Str(s)) if s == "close"));
    // survives the canonical round trip
    let canon = ir::canonicalize(&m);
    let text = ir::print_upir(&canon).unwrap();
    assert!(text.contains("upir.ext { proc_bind = \"close\" }"), "{text}");
    assert_eq!(ir::parse_upir(&text).unwrap(), canon);
    // and unparse re-emits it as a clause
    let omp = passes::unparse_to_openmp(&m).unwrap();
    assert!(omp.contains("proc_bind(close)"), "{omp}");
    let rebuilt = pipeline(&omp);
    assert_eq!(
        ir::print_upir(&ir::canonicalize(&rebuilt)).unwrap(),
        ir::print_upir(&canon).unwrap()
    );
}

#[test]
fn interpreting_parsed_upir_matches_source_build() {
    let src = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/axpy_omp.ukl"
    ))
    .unwrap();
    let m = pipeline(&src);
    let text = ir::print_upir(&ir::canonicalize(&m)).unwrap();
    let reparsed = ir::parse_upir(&text).unwrap();
    let inputs = BTreeMap::from([
        ("x".to_string(), Value::FloatArr { dims: vec![4], data: vec![1.0, 2.0, 3.0, 4.0] }),
        ("y".to_string(), Value::FloatArr { dims: vec![4], data: vec![1.0; 4] }),
        ("a".to_string(), Value::Float(2.0)),
        ("n".to_string(), Value::Int(4)),
    ]);
    let a = parallel(&m, "axpy", &inputs, 4);
    let b = parallel(&reparsed, "axpy", &inputs, 4);
    assert_eq!(a, b);
}

#[test]
fn runtime_form_serialization_golden() {
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel for num_threads(2)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
    let m = pipeline(src);
    let rf = passes::lower_to_runtime(&m).unwrap();
    let text = passes::serialize_runtime_form(&rf);
    // host spmd shares outer-scope variables (by-ref); the loop body
    // captures only what it references (n appears in the loop bound, which
    // the dispatch primitive owns).
    let expected = "\
runtime-form
func @f(%y, %n)
  fork_units(%c2, @__spmd_1, env=[%n: by-ref, %y: by-ref])
end
outlined @__loop_body_0(%y: by-ref)
  stmt %y[%i] = %i
end
outlined @__spmd_1(%n: by-ref, %y: by-ref)
  dispatch_loop(@__loop_body_0, induction=%i, lowerBound(%c0), upperBound(%n), step(%c1), schedule(static) distribute(units))
  barrier(implicit)
  barrier(implicit)
end
";
    assert_eq!(text, expected);
}

#[test]
fn interpreter_trace_golden() {
    let src = "\
void f(int y[]) {
  #pragma omp parallel num_threads(2)
  y[__unit_id()] = 1;
}
";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0, 0]))]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    let expected = [
        "t=0 unit=0.0 event=fork detail=teams=1 units=2",
        "t=1 unit=0.0 event=barrier detail=step=arrive-compute implicit=true",
        "t=2 unit=0.1 event=barrier detail=step=arrive-compute implicit=true",
        "t=3 unit=0.0 event=barrier detail=step=wait-release",
    ];
    assert_eq!(out.trace, expected, "{:#?}", out.trace);
    assert_eq!(out.buffers["y"], iarr(&[1, 1]));
}

#[test]
fn nested_spmd_regions_interpret() {
    let src = "\
void f(int y[]) {
  #pragma omp teams num_teams(2)
  {
    #pragma omp parallel num_threads(3)
    {
      #pragma omp atomic
      y[0] = y[0] + 1;
    }
  }
}
";
    let m = pipeline(src);
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0]))]);
    // 2 outer units (teams spmd, count forced) x 3 inner units each
    let opts = Options { collect_trace: false, ..Options::default() };
    let out = interpret(&m, "f", &inputs, &opts).unwrap();
    // outer spmd defaults to its num_teams=2 as team count and default
    // units; each executing unit runs the inner spmd of 3
    let Value::IntArr { data, .. } = &out.buffers["y"] else { panic!() };
    assert!(data[0] > 0 && data[0] % 3 == 0, "inner spmd of 3 ran per outer unit: {}", data[0]);
}

#[test]
fn non_canonical_loop_interprets_in_source_form() {
    let src = "\
void f(int r[], int n) {
  int count = 0;
  for (int i = 0; i * i < n; i++)
    count = count + 1;
  r[0] = count;
}
";
    let m = pipeline(src);
    // i*i < 10 holds for i in {0,1,2,3}
    let inputs = BTreeMap::from([("r".to_string(), iarr(&[0])), ("n".to_string(), Value::Int(10))]);
    for mode in [Mode::Parallel, Mode::Serial] {
        let out = interpret(&m, "f", &inputs, &Options { mode, ..Options::default() }).unwrap();
        assert_eq!(out.buffers["r"], iarr(&[4]), "{mode:?}");
    }
}

#[test]
fn broadcast_copies_primary_value_to_all_units() {
    let text = "\
module {
  func @f(%y : int[], %p : int) {
    upir.spmd target(cpu) num_units(%c3) data(%p(firstprivate(explicit), none(implicit), read-write, pattern(block), allocator(default_mem_alloc), deallocator(default_mem_dealloc), memcpy(default_memcpy))) {
      upir.if condition((__unit_id() == %c0)) {
        upir.assign %p = %c7
      }
      upir.sync broadcast sync primary(thread:0) secondary(thread:*) data(%p)
      upir.assign %y[__unit_id()] = %p
    }
  }
}
";
    let m = ir::parse_upir(text).unwrap();
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0, 0, 0])), ("p".to_string(), Value::Int(1))]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    assert_eq!(out.buffers["y"], iarr(&[7, 7, 7]));
}

#[test]
fn send_recv_moves_private_value_between_units() {
    let text = "\
module {
  func @f(%y : int[], %p : int) {
    upir.spmd target(cpu) num_units(%c2) data(%p(firstprivate(explicit), none(implicit), read-write, pattern(block), allocator(default_mem_alloc), deallocator(default_mem_dealloc), memcpy(default_memcpy))) {
      upir.if condition((__unit_id() == %c0)) {
        upir.assign %p = %c42
      }
      upir.sync send sync primary(rank:0) secondary(rank:1) data(%p)
      upir.assign %y[__unit_id()] = %p
    }
  }
}
";
    let m = ir::parse_upir(text).unwrap();
    let inputs = BTreeMap::from([("y".to_string(), iarr(&[0, 0])), ("p".to_string(), Value::Int(1))]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    // unit 0 set its copy to 42; the send handed it to unit 1
    assert_eq!(out.buffers["y"], iarr(&[42, 42]));
}

#[test]
fn remote_task_executes_locally_with_remote_trace_tag() {
    let text = "\
module {
  func @f(%x : float[]) {
    upir.task remote(host:0) data(%x(shared(implicit), tofrom(explicit), read-write, pattern(block), allocator(default_mem_alloc), deallocator(default_mem_dealloc), memcpy(default_memcpy))) {
      upir.assign %x[%c0] = %f9.5
    }
  }
}
";
    let m = ir::parse_upir(text).unwrap();
    let inputs =
        BTreeMap::from([("x".to_string(), Value::FloatArr { dims: vec![1], data: vec![0.0] })]);
    let out = interpret(&m, "f", &inputs, &Options::default()).unwrap();
    assert_eq!(out.buffers["x"], Value::FloatArr { dims: vec![1], data: vec![9.5] });
    assert!(out.trace.iter().any(|l| l.contains("remote")), "{:#?}", out.trace);
}
