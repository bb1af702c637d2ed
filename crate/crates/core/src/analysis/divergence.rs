//! SPMD divergence detection.
//!
//! An if-region inside an spmd diverges when its condition (transitively,
//! through a syntactic def walk) reads `__unit_id()` or `__team_id()`. The
//! walk follows calls into module-local functions so kernel-call bodies are
//! covered.

use crate::ast::Expr;
use crate::diag::Result;
use crate::ir::*;
use std::collections::{HashMap, HashSet};

pub fn detect_divergence(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    let defs = function_defs(&m);
    let snapshot = m.clone();
    for f in &mut m.functions {
        let local = defs.get(&f.name).cloned().unwrap_or_default();
        fn go(
            region: &mut Region,
            snapshot: &Module,
            defs: &HashMap<String, DefMap>,
            local: &DefMap,
        ) {
            for node in &mut region.nodes {
                if let NodeKind::Spmd(s) = &mut node.kind {
                    s.branch = divergent_ifs(snapshot, &s.body, defs, local);
                }
                for r in node.regions_mut() {
                    go(r, snapshot, defs, local);
                }
            }
        }
        go(&mut f.body, &snapshot, &defs, &local);
    }
    Ok(m)
}

/// Flow-insensitive per-function def map: symbol -> every expression ever
/// assigned to it (declarations and assignments alike).
type DefMap = HashMap<String, Vec<Expr>>;

fn function_defs(module: &Module) -> HashMap<String, DefMap> {
    let mut out = HashMap::new();
    for f in &module.functions {
        let mut defs: DefMap = HashMap::new();
        fn go(region: &Region, defs: &mut DefMap) {
            for n in &region.nodes {
                match &n.kind {
                    NodeKind::Decl { name, init: Some(e), .. } => {
                        defs.entry(name.clone()).or_default().push(e.clone());
                    }
                    NodeKind::Assign { base, indices, value } if indices.is_empty() => {
                        defs.entry(base.clone()).or_default().push(value.clone());
                    }
                    _ => {}
                }
                for r in n.regions() {
                    go(r, defs);
                }
            }
        }
        go(&f.body, &mut defs);
        out.insert(f.name.clone(), defs);
    }
    out
}

/// Does `e` read a unit/team index, either directly or through symbols whose
/// defining expressions do?
fn depends_on_unit(e: &Expr, defs: &DefMap, visiting: &mut HashSet<String>) -> bool {
    if e.reads_unit_intrinsic() {
        return true;
    }
    let mut syms = Vec::new();
    e.referenced_symbols(&mut syms);
    for s in syms {
        if !visiting.insert(s.clone()) {
            continue;
        }
        if let Some(exprs) = defs.get(&s) {
            if exprs.iter().any(|d| depends_on_unit(d, defs, visiting)) {
                return true;
            }
        }
    }
    false
}

/// Divergent if-node ids inside a region, walking through calls to module
/// functions. The def environment switches to the callee's own defs.
fn divergent_ifs(
    module: &Module,
    region: &Region,
    defs: &HashMap<String, DefMap>,
    local: &DefMap,
) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut visited_fns = HashSet::new();
    collect(module, region, defs, local, &mut out, &mut visited_fns);
    return out;

    fn collect(
        module: &Module,
        region: &Region,
        all: &HashMap<String, DefMap>,
        local: &DefMap,
        out: &mut Vec<NodeId>,
        visited_fns: &mut HashSet<String>,
    ) {
        for n in &region.nodes {
            match &n.kind {
                NodeKind::If(i) => {
                    let mut visiting = HashSet::new();
                    if depends_on_unit(&i.cond, local, &mut visiting) && !out.contains(&n.id) {
                        out.push(n.id);
                    }
                }
                NodeKind::Call { callee, .. }
                    if visited_fns.insert(callee.clone()) => {
                        if let Some(f) = module.function(callee) {
                            let callee_defs = all.get(callee).unwrap_or(local);
                            collect(module, &f.body, all, callee_defs, out, visited_fns);
                        }
                    }
                _ => {}
            }
            for r in n.regions() {
                collect(module, r, all, local, out, visited_fns);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;
    use crate::ir::build_upir;

    fn branches(src: &str) -> Vec<usize> {
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let m = detect_divergence(&m).unwrap();
        let mut counts = Vec::new();
        m.walk(&mut |n| {
            if let NodeKind::Spmd(s) = &n.kind {
                counts.push(s.branch.len());
            }
        });
        counts
    }

    #[test]
    fn cuda_guard_detected_through_call() {
        let src = "\
__global__ void k(float y[], int n) {
  int i = blockDim.x * blockIdx.x + threadIdx.x;
  if (i < n) y[i] = 0;
}
void f(float y[], int n) {
  k<<<1, 256>>>(y, n);
}
";
        assert_eq!(branches(src), [1]);
    }

    #[test]
    fn invariant_condition_not_recorded() {
        let src = "\
void f(float y[], int n) {
  #pragma omp parallel
  if (n > 0) y[0] = 1;
}
";
        assert_eq!(branches(src), [0]);
    }

    #[test]
    fn only_inner_if_reads_unit_id() {
        let src = "\
void f(float y[], int n) {
  #pragma omp parallel
  if (n > 0) {
    int i = __unit_id();
    if (i < n) y[i] = 1;
  }
}
";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let m = detect_divergence(&m).unwrap();
        let mut branch = Vec::new();
        m.walk(&mut |n| {
            if let NodeKind::Spmd(s) = &n.kind {
                branch = s.branch.clone();
            }
        });
        assert_eq!(branch.len(), 1);
        let inner = m.find_node(branch[0]).unwrap();
        let NodeKind::If(i) = &inner.kind else { panic!() };
        assert!(matches!(&i.cond, Expr::Binary { .. }));
        // the inner `if (i < n)`, not the outer `if (n > 0)`
        let mut syms = Vec::new();
        i.cond.referenced_symbols(&mut syms);
        assert!(syms.contains(&"i".to_string()));
    }

    #[test]
    fn idempotent_and_validates() {
        let src = "\
__global__ void k(float y[], int n) {
  int i = blockDim.x * blockIdx.x + threadIdx.x;
  if (i < n) y[i] = 0;
}
void f(float y[], int n) {
  k<<<1, 256>>>(y, n);
}
";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let once = detect_divergence(&m).unwrap();
        let twice = detect_divergence(&once).unwrap();
        assert_eq!(once, twice);
        validate(&once).unwrap();
    }
}
