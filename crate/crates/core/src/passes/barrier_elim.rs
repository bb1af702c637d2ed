//! Redundant-barrier elimination.
//!
//! Two adjacent synchronous barriers with no intervening node collapse into
//! one; an explicit barrier wins over an implicit one for provenance. The
//! barrier count never increases, and interpreter-observable state is
//! unchanged on race-free programs (the second barrier orders nothing new).

use crate::diag::Result;
use crate::ir::*;
use std::collections::HashSet;

pub fn eliminate_redundant_barriers(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    let mut dropped: HashSet<NodeId> = HashSet::new();
    for f in &mut m.functions {
        elim_region(&mut f.body, &mut dropped);
    }
    // Cross references to dropped nodes vanish with them.
    m.walk_mut(&mut |n| {
        let list = match &mut n.kind {
            NodeKind::Spmd(s) => &mut s.sync,
            NodeKind::Loop(l) => &mut l.sync,
            NodeKind::Task(t) => &mut t.sync,
            _ => return,
        };
        list.retain(|id| !dropped.contains(id));
    });
    Ok(m)
}

fn is_plain_barrier(n: &Node) -> Option<bool> {
    match &n.kind {
        NodeKind::Sync(s)
            if s.name == SyncName::Barrier && s.mode == SyncMode::Sync && s.body.is_none() =>
        {
            Some(s.implicit)
        }
        _ => None,
    }
}

fn elim_region(region: &mut Region, dropped: &mut HashSet<NodeId>) {
    for node in &mut region.nodes {
        for r in node.regions_mut() {
            elim_region(r, dropped);
        }
    }
    let old = std::mem::take(&mut region.nodes);
    let mut out: Vec<Node> = Vec::new();
    for node in old {
        let implicit = is_plain_barrier(&node);
        let prev_implicit = out.last().and_then(is_plain_barrier);
        match (prev_implicit, implicit) {
            (Some(prev_impl), Some(cur_impl)) => {
                // Adjacent run: keep exactly one, explicit wins.
                if prev_impl && !cur_impl {
                    let prev = out.pop().unwrap();
                    dropped.insert(prev.id);
                    out.push(node);
                } else {
                    dropped.insert(node.id);
                }
            }
            _ => out.push(node),
        }
    }
    region.nodes = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::interp::{interpret, Mode, Options, Value};
    use crate::ir::build_upir;
    use std::collections::BTreeMap;

    fn analyzed(src: &str) -> Module {
        analysis::run_all(&build_upir(&parse_kernel_source(src).unwrap()).unwrap()).unwrap()
    }

    const WS_THEN_EXPLICIT: &str = "\
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

    #[test]
    fn implicit_followed_by_explicit_collapses() {
        let m = analyzed(WS_THEN_EXPLICIT);
        let before = m.barrier_count();
        let after_m = eliminate_redundant_barriers(&m).unwrap();
        let after = after_m.barrier_count();
        assert!(after < before, "{after} < {before}");
        // the loop's implicit barrier, the explicit barrier, and the spmd
        // close barrier are all adjacent: one explicit barrier survives
        let mut flags = Vec::new();
        after_m.walk(&mut |n| {
            if let NodeKind::Spmd(s) = &n.kind {
                flags = s.body.nodes.iter().filter_map(is_plain_barrier).collect();
            }
        });
        assert_eq!(flags, vec![false], "explicit survivor only");
        validate(&after_m).unwrap();
    }

    #[test]
    fn single_barrier_unchanged() {
        let src = "\
void f(int y[]) {
  #pragma omp parallel num_threads(2)
  {
    y[0] = 1;
    #pragma omp barrier
    y[1] = 2;
  }
}
";
        let m = analyzed(src);
        let out = eliminate_redundant_barriers(&m).unwrap();
        assert_eq!(m.barrier_count(), out.barrier_count());
    }

    #[test]
    fn barriers_separated_by_shared_write_kept() {
        let src = "\
void f(int y[]) {
  #pragma omp parallel num_threads(2)
  {
    #pragma omp barrier
    y[0] = 1;
    #pragma omp barrier
  }
}
";
        let m = analyzed(src);
        let out = eliminate_redundant_barriers(&m).unwrap();
        // the two explicit barriers stay; only the spmd close barrier count changes nothing
        assert_eq!(out.barrier_count(), m.barrier_count() - 1); // explicit + close-barrier adjacency merges
        let mut explicit = 0;
        out.walk(&mut |n| {
            if let Some(false) = is_plain_barrier(n) {
                explicit += 1;
            }
        });
        assert_eq!(explicit, 2, "user barriers around the write survive");
    }

    #[test]
    fn observable_state_unchanged() {
        let m = analyzed(WS_THEN_EXPLICIT);
        let out = eliminate_redundant_barriers(&m).unwrap();
        let inputs = BTreeMap::from([
            ("y".to_string(), Value::IntArr { dims: vec![6], data: vec![0; 6] }),
            ("n".to_string(), Value::Int(6)),
        ]);
        for mode in [Mode::Parallel, Mode::Serial] {
            let opts = Options { mode, ..Options::default() };
            let a = interpret(&m, "f", &inputs, &opts).unwrap();
            let b = interpret(&out, "f", &inputs, &opts).unwrap();
            assert_eq!(a.buffers, b.buffers);
        }
    }

    #[test]
    fn idempotent_and_monotone() {
        let m = analyzed(WS_THEN_EXPLICIT);
        let once = eliminate_redundant_barriers(&m).unwrap();
        let twice = eliminate_redundant_barriers(&once).unwrap();
        assert_eq!(canonicalize(&once), canonicalize(&twice));
        assert!(once.barrier_count() <= m.barrier_count());
    }
}
