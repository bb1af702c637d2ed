//! Implicit synchronization materialization.
//!
//! Language semantics mandate barriers the user never wrote: after a
//! worksharing loop without nowait, after a `single` region, and at the close
//! of every SPMD region. They are materialized as explicit nodes flagged
//! `implicit`. The pass owns every implicit barrier: it strips them and
//! re-derives the set from scratch, which makes it idempotent.

use crate::diag::Result;
use crate::ir::*;

pub fn materialize_implicit_sync(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    let mut next = next_id(&m);
    for f in &mut m.functions {
        rebuild_region(&mut f.body, false, &mut next);
    }
    refresh_sync_lists(&mut m);
    Ok(m)
}

fn next_id(m: &Module) -> u32 {
    let mut max = 0;
    m.walk(&mut |n| max = max.max(n.id.0 + 1));
    max
}

fn implicit_barrier(next: &mut u32) -> Node {
    let id = NodeId(*next);
    *next += 1;
    Node { id, kind: NodeKind::Sync(SyncNode::barrier(true)) }
}

fn is_implicit_barrier(n: &Node) -> bool {
    matches!(&n.kind, NodeKind::Sync(s) if s.name == SyncName::Barrier && s.implicit)
}

fn rebuild_region(region: &mut Region, is_spmd_body: bool, next: &mut u32) {
    let old = std::mem::take(&mut region.nodes);
    let mut nodes: Vec<Node> = Vec::new();
    for mut node in old {
        if is_implicit_barrier(&node) {
            continue;
        }
        let spmd_child = matches!(node.kind, NodeKind::Spmd(_));
        for r in node.regions_mut() {
            rebuild_region(r, spmd_child, next);
        }
        let barrier_after = match &node.kind {
            NodeKind::Loop(l) => {
                !l.nowait
                    && matches!(
                        l.parallel,
                        Some(LoopParallel { kind: LoopParKind::Worksharing { .. } })
                    )
            }
            NodeKind::Sync(s) => s.name == SyncName::Single,
            _ => false,
        };
        nodes.push(node);
        if barrier_after {
            nodes.push(implicit_barrier(next));
        }
    }
    reorder_reductions(&mut nodes);
    if is_spmd_body {
        nodes.push(implicit_barrier(next));
    }
    region.nodes = nodes;
}

/// Build placed loop-clause reductions directly after their loop; the barrier
/// insertion above appends after the loop itself, so swap each
/// [loop][barrier][reduction...] run into [loop][reduction...][barrier].
fn reorder_reductions(nodes: &mut [Node]) {
    let mut i = 0;
    while i < nodes.len() {
        if is_implicit_barrier(&nodes[i]) {
            let mut j = i + 1;
            while j < nodes.len()
                && matches!(&nodes[j].kind, NodeKind::Sync(s) if s.name == SyncName::Reduction)
            {
                j += 1;
            }
            if j > i + 1 {
                nodes[i..j].rotate_left(1);
                i = j;
                continue;
            }
        }
        i += 1;
    }
}

/// Sync fields list the sync nodes of the node's direct body region; loops
/// additionally keep the reduction nodes registered from their clauses.
fn refresh_sync_lists(m: &mut Module) {
    let mut live: std::collections::HashSet<NodeId> = std::collections::HashSet::new();
    m.walk(&mut |n| {
        live.insert(n.id);
    });
    m.walk_mut(&mut |n| {
        let (list, body) = match &mut n.kind {
            NodeKind::Spmd(s) => (&mut s.sync, &s.body),
            NodeKind::Task(t) => (&mut t.sync, &t.body),
            NodeKind::Loop(l) => (&mut l.sync, &l.body),
            _ => return,
        };
        let mut new: Vec<NodeId> = list.iter().copied().filter(|id| live.contains(id)).collect();
        for child in &body.nodes {
            if matches!(child.kind, NodeKind::Sync(_)) && !new.contains(&child.id) {
                new.push(child.id);
            }
        }
        *list = new;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;
    use crate::ir::build_upir;

    fn analyzed(src: &str) -> Module {
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        materialize_implicit_sync(&m).unwrap()
    }

    #[test]
    fn worksharing_loop_gets_trailing_barrier() {
        let m = analyzed(
            "void f(float y[], int n) {\n#pragma omp parallel for\nfor (int i = 0; i < n; i++) y[i] = 0;\n}",
        );
        let NodeKind::Spmd(s) = &m.functions[0].body.nodes[0].kind else { panic!() };
        // loop, loop barrier, spmd close barrier
        assert_eq!(s.body.nodes.len(), 3);
        assert!(is_implicit_barrier(&s.body.nodes[1]));
        assert!(is_implicit_barrier(&s.body.nodes[2]));
        assert_eq!(s.sync.len(), 2);
    }

    #[test]
    fn nowait_suppresses_barrier() {
        let m = analyzed(
            "void f(float y[], int n) {\n#pragma omp parallel for nowait\nfor (int i = 0; i < n; i++) y[i] = 0;\n}",
        );
        let NodeKind::Spmd(s) = &m.functions[0].body.nodes[0].kind else { panic!() };
        // loop, spmd close barrier only
        assert_eq!(s.body.nodes.len(), 2);
    }

    #[test]
    fn reduction_sits_before_loop_barrier() {
        let m = analyzed(
            "void f(int r[], int n) {\nint sum = 0;\n#pragma omp parallel for reduction(+: sum)\nfor (int i = 1; i <= n; i++) sum += i;\nr[0] = sum;\n}",
        );
        let NodeKind::Spmd(s) = &m.functions[0].body.nodes[1].kind else { panic!() };
        let kinds: Vec<&str> = s
            .body
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Loop(_) => "loop",
                NodeKind::Sync(sy) if sy.name == SyncName::Reduction => "red",
                NodeKind::Sync(sy) if sy.name == SyncName::Barrier => "bar",
                _ => "?",
            })
            .collect();
        assert_eq!(kinds, ["loop", "red", "bar", "bar"]);
        let NodeKind::Loop(l) = &s.body.nodes[0].kind else { panic!() };
        assert_eq!(l.sync.len(), 1, "loop registers its reduction");
    }

    #[test]
    fn idempotent() {
        let src = "void f(int r[], int n) {\nint sum = 0;\n#pragma omp parallel for reduction(+: sum)\nfor (int i = 1; i <= n; i++) sum += i;\nr[0] = sum;\n}";
        let once = analyzed(src);
        let twice = materialize_implicit_sync(&once).unwrap();
        assert_eq!(canonicalize(&once), canonicalize(&twice));
    }
}
