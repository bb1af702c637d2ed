//! upirc: driver wiring frontend -> build -> analyses -> passes -> emit or
//! interpret.
//!
//! Input kind is detected by extension: `.ukl` kernel-language source is
//! parsed and built; `.upir` text is parsed directly. The default pipeline
//! for `.ukl` runs all analyses; transforms are opt-in via `--passes`.

use clap::{Parser, ValueEnum};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use upir_core::ast::ScalarType;
use upir_core::diag::Diag;
use upir_core::interp::{self, Mode, Options, Value};
use upir_core::ir::{self, Module};
use upir_core::{analysis, frontend, passes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitKind {
    Upir,
    Openmp,
    Openacc,
    Accdialect,
    Runtime,
}

#[derive(Parser, Debug)]
#[command(name = "upirc", version, about = "Unified parallel IR compiler driver")]
struct Cli {
    /// Input file (.ukl kernel source or .upir IR text)
    file: PathBuf,

    /// Artifact to emit (default: upir)
    #[arg(long, value_enum)]
    emit: Option<EmitKind>,

    /// Comma list of passes to run in order: infer-data, infer-access,
    /// implicit-sync, nesting, divergence, all (analyses), barrier-elim,
    /// collapse, none
    #[arg(long)]
    passes: Option<String>,

    /// Interpret the module and print the final buffers
    #[arg(long)]
    run: bool,

    /// Use the serial oracle instead of the parallel engine
    #[arg(long)]
    serial: bool,

    /// Force the unit count of every SPMD region
    #[arg(long)]
    units: Option<u32>,

    /// Force the team count of every SPMD region
    #[arg(long)]
    teams: Option<u32>,

    /// Parameter bindings: name=scalar, name=v1:v2:..., name=RxC:v1:v2:...
    #[arg(long = "input")]
    bindings: Option<String>,

    /// Print the per-unit worksharing chunk assignments
    #[arg(long)]
    trace_schedule: bool,

    /// Check the round-trip invariants; exit 1 on any violation
    #[arg(long)]
    verify_roundtrip: bool,

    /// Write the artifact to a file instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("{}", paint_error(&msg));
            ExitCode::FAILURE
        }
    }
}

fn paint_error(msg: &str) -> String {
    let color = std::env::var("UPIRC_COLOR").map(|v| v == "1").unwrap_or(false);
    if color {
        msg.replace("error:", "\x1b[31merror:\x1b[0m")
    } else {
        msg.to_string()
    }
}

fn run(cli: &Cli) -> Result<(), String> {
    let path = cli.file.display().to_string();
    let text = std::fs::read_to_string(&cli.file).map_err(|e| format!("{path}: error: {e}"))?;
    let ext = cli.file.extension().and_then(|e| e.to_str()).unwrap_or("");
    let with_pos = |d: Diag| format!("{path}:{d}");

    let (mut module, default_analyses) = match ext {
        "ukl" => {
            let program = frontend::parse_kernel_source(&text).map_err(with_pos)?;
            let built = ir::build::build(&program).map_err(with_pos)?;
            for w in &built.warnings {
                eprintln!("{path}:{w}");
            }
            (built.module, true)
        }
        "upir" => (ir::parse_upir(&text).map_err(with_pos)?, false),
        other => {
            return Err(format!(
                "{path}: error: unknown input extension `.{other}` (expected .ukl or .upir)"
            ))
        }
    };

    match &cli.passes {
        None => {
            if default_analyses {
                module = analysis::run_all(&module).map_err(with_pos)?;
            }
        }
        Some(list) => {
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                module = match name {
                    "none" => module,
                    "all" => analysis::run_all(&module).map_err(with_pos)?,
                    "infer-data" => analysis::infer_data_attributes(&module).map_err(with_pos)?,
                    "infer-access" => analysis::infer_access_modes(&module).map_err(with_pos)?,
                    "implicit-sync" => analysis::materialize_implicit_sync(&module).map_err(with_pos)?,
                    "nesting" => analysis::annotate_nesting(&module).map_err(with_pos)?,
                    "divergence" => analysis::detect_divergence(&module).map_err(with_pos)?,
                    "barrier-elim" => passes::eliminate_redundant_barriers(&module).map_err(with_pos)?,
                    "collapse" => passes::collapse_loops(&module).map_err(with_pos)?,
                    other => return Err(format!("{path}: error: unknown pass `{other}`")),
                };
            }
        }
    }

    ir::validate(&module).map_err(with_pos)?;

    if cli.verify_roundtrip {
        verify_roundtrip(&module, cli.emit).map_err(|e| format!("{path}: {e}"))?;
    }

    if cli.run || cli.trace_schedule {
        return interpret_module(cli, &module, &path);
    }

    let artifact = match cli.emit.unwrap_or(EmitKind::Upir) {
        EmitKind::Upir => ir::print_upir(&ir::canonicalize(&module)).map_err(with_pos)?,
        EmitKind::Openmp => passes::unparse_to_openmp(&module).map_err(with_pos)?,
        EmitKind::Openacc => passes::unparse_to_openacc(&module).map_err(with_pos)?,
        EmitKind::Accdialect => passes::export_acc_dialect(&module).map_err(with_pos)?,
        EmitKind::Runtime => {
            let rf = passes::lower_to_runtime(&module).map_err(with_pos)?;
            passes::serialize_runtime_form(&rf)
        }
    };
    match &cli.output {
        Some(out) => {
            std::fs::write(out, artifact).map_err(|e| format!("{}: error: {e}", out.display()))?
        }
        None => print!("{artifact}"),
    }
    Ok(())
}

fn verify_roundtrip(module: &Module, emit: Option<EmitKind>) -> Result<(), String> {
    let canon = ir::canonicalize(module);
    let text = ir::print_upir(&canon).map_err(|d| format!("error: {d}"))?;
    let back = ir::parse_upir(&text).map_err(|d| format!("error: round-trip reparse failed: {d}"))?;
    if back != canon {
        return Err("error: round-trip violation: parse(print(m)) differs from canonicalize(m)".into());
    }
    let text2 = ir::print_upir(&back).map_err(|d| format!("error: {d}"))?;
    if text2 != text {
        return Err("error: round-trip violation: print is not a fixpoint".into());
    }
    // Cross-translation round trip when a source model is the target.
    let unparse: Option<(&str, fn(&Module) -> upir_core::diag::Result<String>)> = match emit {
        Some(EmitKind::Openmp) => Some(("openmp", passes::unparse_to_openmp)),
        Some(EmitKind::Openacc) => Some(("openacc", passes::unparse_to_openacc)),
        _ => None,
    };
    if let Some((name, f)) = unparse {
        let src = f(module).map_err(|d| format!("error: {d}"))?;
        let program = frontend::parse_kernel_source(&src)
            .map_err(|d| format!("error: rebuilt {name} source does not parse: {d}"))?;
        let rebuilt = ir::build_upir(&program).map_err(|d| format!("error: {d}"))?;
        let rebuilt = analysis::run_all(&rebuilt).map_err(|d| format!("error: {d}"))?;
        let rebuilt_text =
            ir::print_upir(&ir::canonicalize(&rebuilt)).map_err(|d| format!("error: {d}"))?;
        if rebuilt_text != text {
            return Err(format!(
                "error: cross-translation round trip through {name} is not byte-identical"
            ));
        }
    }
    Ok(())
}

fn interpret_module(cli: &Cli, module: &Module, path: &str) -> Result<(), String> {
    let Some(entry) = module.functions.iter().find(|f| !f.is_kernel) else {
        return Err(format!("{path}: error: no entry function (every function is a kernel)"));
    };
    let mut inputs: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(b) = &cli.bindings {
        parse_bindings(b, entry, &mut inputs).map_err(|e| format!("{path}: error: {e}"))?;
    }
    let opts = Options {
        mode: if cli.serial { Mode::Serial } else { Mode::Parallel },
        units_override: cli.units,
        teams_override: cli.teams,
        collect_trace: true,
        ..Options::default()
    };
    let out = interp::interpret(module, &entry.name, &inputs, &opts)
        .map_err(|e| format!("{path}: error: {e}"))?;
    for w in &out.warnings {
        eprintln!("{path}: warning: {w}");
    }
    let mut text = String::new();
    if cli.trace_schedule {
        for ev in &out.schedule_log {
            text.push_str(&format!(
                "loop={} unit={}.{} chunk=[{},{})\n",
                ev.loop_id, ev.team, ev.unit, ev.chunk.0, ev.chunk.1
            ));
        }
    }
    if cli.run {
        for (name, value) in &out.buffers {
            text.push_str(&format!("{name} = {value}\n"));
        }
    }
    match &cli.output {
        Some(out_path) => {
            std::fs::write(out_path, text).map_err(|e| format!("{}: error: {e}", out_path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

/// `x=1:2:3, a=2, m=2x2:1:0:0:1`; scalar/array element types come from the
/// entry function's parameter types.
fn parse_bindings(
    text: &str,
    entry: &upir_core::ir::UpirFunction,
    out: &mut BTreeMap<String, Value>,
) -> Result<(), String> {
    for binding in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((name, val)) = binding.split_once('=') else {
            return Err(format!("malformed binding `{binding}` (expected name=value)"));
        };
        let name = name.trim();
        let param = entry
            .params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| format!("`{name}` is not a parameter of @{}", entry.name))?;
        let float = param.ty.elem != ScalarType::Int;
        let value = if param.ty.rank == 0 {
            if float {
                Value::Float(val.trim().parse::<f64>().map_err(|e| format!("`{name}`: {e}"))?)
            } else {
                Value::Int(val.trim().parse::<i64>().map_err(|e| format!("`{name}`: {e}"))?)
            }
        } else {
            let (dims, elems_text) = match val.split_once(':') {
                Some((head, rest)) if head.contains('x') => {
                    let (r, c) = head.split_once('x').unwrap();
                    let r: usize = r.trim().parse().map_err(|e| format!("`{name}`: {e}"))?;
                    let c: usize = c.trim().parse().map_err(|e| format!("`{name}`: {e}"))?;
                    (vec![r, c], rest)
                }
                _ => (Vec::new(), val),
            };
            let parts: Vec<&str> = elems_text.split(':').map(str::trim).collect();
            let dims = if dims.is_empty() { vec![parts.len()] } else { dims };
            let expected: usize = dims.iter().product();
            if parts.len() != expected {
                return Err(format!("`{name}`: {} elements given, {expected} expected", parts.len()));
            }
            if float {
                let data = parts
                    .iter()
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("`{name}`: {e}"))?;
                Value::FloatArr { dims, data }
            } else {
                let data = parts
                    .iter()
                    .map(|p| p.parse::<i64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("`{name}`: {e}"))?;
                Value::IntArr { dims, data }
            }
        };
        out.insert(name.to_string(), value);
    }
    Ok(())
}
