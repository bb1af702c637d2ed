//! Textual export to an OpenACC-style dialect: `acc.parallel` regions with
//! `acc.loop` and `scf.for` operations. Purely textual; no toolchain behind
//! it. Representability matches `unparse_to_openacc`.

use crate::diag::Result;
use crate::ir::print::pe;
use crate::ir::*;
use crate::passes::unparse::unparse_to_openacc;
use std::fmt::Write;

pub fn export_acc_dialect(module: &Module) -> Result<String> {
    // Same precondition as OpenACC unparsing; reject what it rejects.
    unparse_to_openacc(module)?;
    let mut out = String::new();
    for f in &module.functions {
        let params = f.params.iter().map(|p| format!("%{} : {}", p.name, p.ty)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "func @{}({params}) {{", f.name);
        emit_region(module, &f.body, 1, &mut out);
        out.push_str("}\n");
    }
    Ok(out)
}

fn pad(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn emit_region(module: &Module, region: &Region, depth: usize, out: &mut String) {
    for node in &region.nodes {
        emit_node(module, node, depth, out);
    }
}

fn emit_node(module: &Module, node: &Node, depth: usize, out: &mut String) {
    match &node.kind {
        NodeKind::Task(t) => {
            // Offload task + spmd pair becomes one acc.parallel op.
            let spmd = t.body.nodes.iter().find_map(|n| match &n.kind {
                NodeKind::Spmd(s) => Some(s),
                _ => None,
            });
            pad(out, depth);
            let mut line = String::from("acc.parallel");
            if let Some(s) = spmd {
                if let Some(e) = &s.num_teams {
                    let _ = write!(line, " num_gangs({})", pe(e));
                }
                if let Some(e) = &s.num_units {
                    let _ = write!(line, " num_workers({})", pe(e));
                }
            }
            if t.is_async {
                line.push_str(" async");
            }
            let _ = writeln!(out, "{line} {{");
            match spmd {
                Some(s) => emit_region(module, &s.body, depth + 1, out),
                None => emit_region(module, &t.body, depth + 1, out),
            }
            pad(out, depth);
            out.push_str("}\n");
        }
        NodeKind::Spmd(s) => {
            // Reached only under a task (checked by the precondition).
            emit_region(module, &s.body, depth, out);
        }
        NodeKind::Loop(l) => match &l.parallel {
            Some(lp) => {
                pad(out, depth);
                let marker = match &lp.kind {
                    LoopParKind::Worksharing { distribute, .. } => match distribute {
                        DistributeTarget::Teams => "gang",
                        DistributeTarget::Units => "worker",
                        DistributeTarget::TeamsUnits => "gang worker",
                    },
                    LoopParKind::Simd { .. } => "vector",
                    LoopParKind::Taskloop { .. } => unreachable!("precondition"),
                };
                let mut line = format!("acc.loop {marker}");
                for id in &l.sync {
                    if let Some(Node { kind: NodeKind::Sync(s), .. }) = module.find_node(*id) {
                        if s.name == SyncName::Reduction {
                            if let Some(op) = s.operation {
                                let syms =
                                    s.data.iter().map(|d| format!("%{d}")).collect::<Vec<_>>().join(", ");
                                let _ = write!(line, " reduction({}: {syms})", op.symbol());
                            }
                        }
                    }
                }
                let _ = writeln!(out, "{line} {{");
                emit_scf_for(module, l, depth + 1, out);
                pad(out, depth);
                out.push_str("}\n");
            }
            None => emit_scf_for(module, l, depth, out),
        },
        NodeKind::DataRegion(d) => {
            pad(out, depth);
            out.push_str("acc.data {\n");
            emit_region(module, &d.body, depth + 1, out);
            pad(out, depth);
            out.push_str("}\n");
        }
        NodeKind::DataUpdate(u) => {
            pad(out, depth);
            let dir = match u.direction {
                Direction::Forward => "device",
                Direction::Backward => "self",
            };
            let syms = u.data.iter().map(|s| format!("%{s}")).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "acc.update {dir}({syms})");
        }
        NodeKind::Sync(s) => {
            if s.implicit {
                return;
            }
            if s.name == SyncName::Taskwait {
                pad(out, depth);
                out.push_str("acc.wait\n");
            }
            // reductions surface on acc.loop; anything else was rejected
        }
        NodeKind::Ext(_) => {}
        NodeKind::If(i) => {
            pad(out, depth);
            let _ = writeln!(out, "scf.if {} {{", pe(&i.cond));
            emit_region(module, &i.then_region, depth + 1, out);
            if let Some(e) = &i.else_region {
                pad(out, depth);
                out.push_str("} else {\n");
                emit_region(module, e, depth + 1, out);
            }
            pad(out, depth);
            out.push_str("}\n");
        }
        NodeKind::BaseFor(f) => {
            pad(out, depth);
            let _ = writeln!(out, "scf.while %{} = {} cond {} step {} {{", f.var, pe(&f.init), pe(&f.cond), pe(&f.step));
            emit_region(module, &f.body, depth + 1, out);
            pad(out, depth);
            out.push_str("}\n");
        }
        NodeKind::Decl { name, init, .. } => {
            pad(out, depth);
            match init {
                Some(e) => {
                    let _ = writeln!(out, "%{name} = {}", pe(e));
                }
                None => {
                    let _ = writeln!(out, "%{name} = %c0");
                }
            }
        }
        NodeKind::Assign { base, indices, value } => {
            pad(out, depth);
            let mut lhs = format!("%{base}");
            for i in indices {
                let _ = write!(lhs, "[{}]", pe(i));
            }
            let _ = writeln!(out, "{lhs} = {}", pe(value));
        }
        NodeKind::Call { callee, args } => {
            pad(out, depth);
            let a = args.iter().map(pe).collect::<Vec<_>>().join(", ");
            let _ = writeln!(out, "call @{callee}({a})");
        }
        NodeKind::Return(v) => {
            pad(out, depth);
            match v {
                Some(e) => {
                    let _ = writeln!(out, "return {}", pe(e));
                }
                None => out.push_str("return\n"),
            }
        }
        NodeKind::DataMovement(_) | NodeKind::MmAlloc(_) | NodeKind::MmDealloc(_) => {
            unreachable!("precondition")
        }
    }
}

fn emit_scf_for(module: &Module, l: &LoopNode, depth: usize, out: &mut String) {
    pad(out, depth);
    let _ = writeln!(
        out,
        "scf.for %{} = {} to {} step {} {{",
        l.induction,
        pe(&l.lower),
        pe(&l.upper),
        pe(&l.step)
    );
    emit_region(module, &l.body, depth + 1, out);
    pad(out, depth);
    out.push_str("}\n");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::ir::build_upir;

    fn pipeline(src: &str) -> Module {
        analysis::run_all(&build_upir(&parse_kernel_source(src).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn axpy_first_op_line() {
        let src = "\
void axpy(float x[], float y[], float a, int n) {
  #pragma omp target parallel for num_threads(1024)
  for (int i = 0; i < n; i++)
    y[i] = y[i] + a * x[i];
}
";
        let text = export_acc_dialect(&pipeline(src)).unwrap();
        let first_op = text.lines().nth(1).unwrap().trim_start();
        assert_eq!(first_op, "acc.parallel num_workers(%c1024) {", "{text}");
        assert!(text.contains("acc.loop worker"), "{text}");
        assert!(text.contains("scf.for %i = %c0 to %n step %c1"), "{text}");
    }

    #[test]
    fn empty_module_empty_export() {
        assert_eq!(export_acc_dialect(&Module::default()).unwrap(), "");
    }

    #[test]
    fn taskloop_rejected() {
        let src = "\
void f(int y[], int n) {
  #pragma omp taskloop num_tasks(4)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        assert!(export_acc_dialect(&pipeline(src)).is_err());
    }
}
