//! Parallelism-aware analyses that complete implicit information on UPIR.
//!
//! Every pass is a pure module-to-module transform and idempotent: applying
//! it twice equals applying it once. Explicit (user-written) attributes are
//! never overwritten.

mod data_attrs;
mod divergence;
mod nesting;
mod sync;

pub use data_attrs::{infer_access_modes, infer_data_attributes};
pub use divergence::detect_divergence;
pub use nesting::annotate_nesting;
pub use sync::materialize_implicit_sync;

use crate::diag::{Diag, Pos, Result};
use crate::ir::{Module, NodeKind};

/// The default analysis pipeline, in order.
pub fn run_all(module: &Module) -> Result<Module> {
    let m = infer_data_attributes(module)?;
    let m = infer_access_modes(&m)?;
    let m = materialize_implicit_sync(&m)?;
    let m = annotate_nesting(&m)?;
    detect_divergence(&m)
}

/// Post-analysis sweep: no data item may keep an unknown field.
pub fn assert_complete(module: &Module) -> Result<()> {
    let mut bad = None;
    module.walk(&mut |n| {
        let items = match &n.kind {
            NodeKind::Spmd(s) => &s.data,
            NodeKind::Loop(l) => &l.data,
            NodeKind::Task(t) => &t.data,
            NodeKind::DataRegion(d) => &d.data,
            _ => return,
        };
        for item in items {
            if item.has_unknown_field() && bad.is_none() {
                bad = Some(item.symbol.clone());
            }
        }
    });
    match bad {
        Some(sym) => Err(Diag::new(
            Pos::default(),
            format!("data item `{sym}` still has unknown fields after analysis"),
        )),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;
    use crate::ir::*;

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

    fn analyzed(src: &str) -> Module {
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        run_all(&m).unwrap()
    }

    fn item<'m>(items: &'m [DataItem], sym: &str) -> &'m DataItem {
        items.iter().find(|i| i.symbol == sym).unwrap_or_else(|| panic!("no item for {sym}"))
    }

    #[test]
    fn axpy_default_rules() {
        let m = analyzed(AXPY_OMP);
        assert_complete(&m).unwrap();
        let NodeKind::Task(task) = &m.functions[0].body.nodes[0].kind else { panic!() };
        for sym in ["x", "y"] {
            let it = item(&task.data, sym);
            let mapping = it.mapping.known().unwrap();
            assert_eq!(mapping.property, MappingProp::ToFrom);
            assert_eq!(mapping.visibility, Visibility::Implicit);
        }
        for sym in ["a", "n"] {
            let it = item(&task.data, sym);
            let sharing = it.sharing.known().unwrap();
            assert_eq!(sharing.property, SharingProp::Firstprivate);
            assert_eq!(sharing.visibility, Visibility::Implicit);
        }
        // access modes per use/def walk
        assert_eq!(*item(&task.data, "x").access.known().unwrap(), Access::ReadOnly);
        assert_eq!(*item(&task.data, "y").access.known().unwrap(), Access::ReadWrite);
        assert_eq!(*item(&task.data, "a").access.known().unwrap(), Access::ReadOnly);
        assert_eq!(*item(&task.data, "n").access.known().unwrap(), Access::ReadOnly);
        // induction variable is private on its loop
        let NodeKind::Spmd(spmd) = &task.body.nodes[0].kind else { panic!() };
        let NodeKind::Loop(l) = &spmd.body.nodes[0].kind else { panic!() };
        let iv = item(&l.data, "i");
        assert_eq!(iv.sharing.known().unwrap().property, SharingProp::Private);
    }

    #[test]
    fn analyzed_axpy_unifies_byte_identical() {
        let omp = canonicalize(&analyzed(AXPY_OMP));
        let acc = canonicalize(&analyzed(AXPY_ACC));
        let a = print_upir(&omp).unwrap();
        let b = print_upir(&acc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn analyzed_round_trips() {
        let m = canonicalize(&analyzed(AXPY_OMP));
        let text = print_upir(&m).unwrap();
        let back = parse_upir(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(back, m, "{text}");
    }

    #[test]
    fn analyses_idempotent() {
        let m = analyzed(AXPY_OMP);
        let again = run_all(&m).unwrap();
        assert_eq!(canonicalize(&m), canonicalize(&again));
    }

    #[test]
    fn empty_region_keeps_empty_data() {
        let src = "void f() {\n#pragma omp parallel\n{\n}\n}";
        let m = analyzed(src);
        let NodeKind::Spmd(s) = &m.functions[0].body.nodes[0].kind else { panic!() };
        assert!(s.data.is_empty());
    }

    #[test]
    fn explicit_attributes_preserved() {
        let src = "\
void f(float y[], int n) {
  #pragma omp target parallel for map(to: y[0:n])
  for (int i = 0; i < n; i++)
    y[i] = 1;
}
";
        let m = analyzed(src);
        let NodeKind::Task(task) = &m.functions[0].body.nodes[0].kind else { panic!() };
        let it = task.data.iter().find(|i| i.symbol == "y").unwrap();
        let mapping = it.mapping.known().unwrap();
        assert_eq!(mapping.property, MappingProp::To);
        assert_eq!(mapping.visibility, Visibility::Explicit);
    }
}
