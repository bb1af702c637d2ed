//! End-to-end driver tests against the built binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn upirc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upirc")).args(args).output().expect("spawn upirc")
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path.display().to_string()
}

fn fixture_path(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

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

#[test]
fn identical_upir_across_models() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy_omp.ukl", AXPY_OMP);
    let acc = write_tmp(&dir, "axpy_acc.ukl", AXPY_ACC);
    let a = upirc(&[&omp, "--emit", "upir"]);
    let b = upirc(&[&acc, "--emit", "upir"]);
    assert!(a.status.success());
    assert!(b.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout, "byte-identical stdout across models");
}

#[test]
fn run_prints_final_buffer() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let out = upirc(&[&omp, "--run", "--units", "8", "--input", "x=1:2:3:4,y=1:1:1:1,a=2,n=4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("y = [3, 5, 7, 9]"), "{stdout}");
}

#[test]
fn serial_and_parallel_agree() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let bindings = "x=1:2:3:4,y=1:1:1:1,a=2,n=4";
    let par = upirc(&[&omp, "--run", "--units", "3", "--input", bindings]);
    let ser = upirc(&[&omp, "--run", "--serial", "--input", bindings]);
    assert_eq!(par.stdout, ser.stdout);
}

#[test]
fn emit_openacc_with_roundtrip_verification() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let out = upirc(&[&omp, "--emit", "openacc", "--verify-roundtrip"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("#pragma acc parallel loop num_workers(1024)"), "{stdout}");
}

#[test]
fn upir_input_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let emitted = upirc(&[&omp, "--emit", "upir"]);
    let upir_file = write_tmp(&dir, "axpy.upir", &String::from_utf8(emitted.stdout.clone()).unwrap());
    let reparsed = upirc(&[&upir_file, "--emit", "upir", "--verify-roundtrip"]);
    assert!(reparsed.status.success(), "{}", String::from_utf8_lossy(&reparsed.stderr));
    assert_eq!(reparsed.stdout, emitted.stdout, "printing a parsed .upir is a fixpoint");
}

#[test]
fn trace_schedule_output() {
    let dir = tempfile::tempdir().unwrap();
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel for
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
    let f = write_tmp(&dir, "f.ukl", src);
    let out = upirc(&[&f, "--trace-schedule", "--units", "3", "--input", "y=0:0:0:0:0:0:0:0:0:0,n=10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("unit=0.0 chunk=[0,4)"), "{stdout}");
    assert!(stdout.contains("unit=0.1 chunk=[4,7)"), "{stdout}");
    assert!(stdout.contains("unit=0.2 chunk=[7,10)"), "{stdout}");
}

#[test]
fn exit_codes() {
    // unknown flag: 2 (usage error)
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let out = upirc(&[&omp, "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // parse error: 1, diagnostic on stderr with file:line:col
    let bad = write_tmp(&dir, "bad.ukl", "void f() { x = 1; }");
    let out = upirc(&[&bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty(), "stdout carries only the artifact");
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.ukl:1:12: error:"), "{stderr}");
    // success: 0
    let out = upirc(&[&omp]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn emit_runtime_trace() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let out = upirc(&[&omp, "--emit", "runtime"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("runtime-form\n"), "{stdout}");
    assert!(stdout.contains("launch_task(offload, nvptx:0"), "{stdout}");
    assert!(stdout.contains("dispatch_loop("), "{stdout}");
}

#[test]
fn output_file_flag() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let dest = dir.path().join("out.upir");
    let out = upirc(&[&omp, "--emit", "upir", "-o", dest.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&dest).unwrap();
    assert!(written.starts_with("module {"), "{written}");
}

#[test]
fn unbalanced_allocation_fails() {
    let path = fixture_path("alloc_unbalanced.upir");
    let out = upirc(&[&path, "--run", "--input", "n=1"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("ledger"), "{stderr}");
}

#[test]
fn color_toggle() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_tmp(&dir, "bad.ukl", "void f() { x = 1; }");
    let out = Command::new(env!("CARGO_BIN_EXE_upirc"))
        .arg(&bad)
        .env("UPIRC_COLOR", "1")
        .output()
        .unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("\x1b[31m"), "{stderr:?}");
    let out = Command::new(env!("CARGO_BIN_EXE_upirc"))
        .arg(&bad)
        .env("UPIRC_COLOR", "0")
        .output()
        .unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(!stderr.contains("\x1b[31m"), "{stderr:?}");
}

#[test]
fn passes_flag_controls_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let src = "\
void f(int y[], int n) {
  #pragma omp parallel num_threads(3)
  {
    #pragma omp for
    for (int i = 0; i < n; i++)
      y[i] = i;
    #pragma omp barrier
  }
}
";
    let f = write_tmp(&dir, "f.ukl", src);
    let plain = upirc(&[&f, "--emit", "upir"]);
    let elim = upirc(&[&f, "--passes", "all,barrier-elim", "--emit", "upir"]);
    assert!(elim.status.success(), "{}", String::from_utf8_lossy(&elim.stderr));
    let count = |bytes: &[u8]| {
        String::from_utf8_lossy(bytes).matches("upir.sync barrier").count()
    };
    assert!(count(&elim.stdout) < count(&plain.stdout));
}

#[test]
fn upir_input_emits_openacc() {
    let dir = tempfile::tempdir().unwrap();
    let omp = write_tmp(&dir, "axpy.ukl", AXPY_OMP);
    let emitted = upirc(&[&omp, "--emit", "upir"]);
    let upir_file = write_tmp(&dir, "mod.upir", &String::from_utf8(emitted.stdout).unwrap());
    let out = upirc(&[&upir_file, "--emit", "openacc", "--verify-roundtrip"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("#pragma acc parallel loop num_workers(1024)"), "{stdout}");
}

#[test]
fn matmul_runs_with_2d_bindings() {
    let dir = tempfile::tempdir().unwrap();
    let src = "\
void matmul(int a[][], int b[][], int c[][], int n) {
  #pragma omp target parallel for collapse(2) num_threads(4)
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++) {
      int s = 0;
      for (int k = 0; k < n; k++)
        s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
}
";
    let f = write_tmp(&dir, "matmul.ukl", src);
    let out = upirc(&[
        &f,
        "--run",
        "--units",
        "3",
        "--input",
        "a=2x2:1:2:3:4,b=2x2:5:6:7:8,c=2x2:0:0:0:0,n=2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("c = [19, 22, 43, 50]"), "{stdout}");
}
