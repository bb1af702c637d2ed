//! SPMD nesting annotation: levels count spmd chains below (innermost = 0),
//! parent/child links are set along unique chains.

use crate::diag::Result;
use crate::ir::*;

pub fn annotate_nesting(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    for f in &mut m.functions {
        annotate_region(&mut f.body, None);
    }
    Ok(m)
}

/// Depth of the deepest spmd chain inside a region.
fn chain_depth(region: &Region) -> i64 {
    let mut max = 0;
    for n in &region.nodes {
        let local = match &n.kind {
            NodeKind::Spmd(s) => 1 + chain_depth(&s.body),
            _ => n.regions().iter().map(|r| chain_depth(r)).max().unwrap_or(0),
        };
        max = max.max(local);
    }
    max
}

/// Immediate spmd descendants: spmd nodes in a region not nested under
/// another spmd.
fn immediate_spmds(region: &Region) -> Vec<NodeId> {
    let mut out = Vec::new();
    for n in &region.nodes {
        match &n.kind {
            NodeKind::Spmd(_) => out.push(n.id),
            _ => {
                for r in n.regions() {
                    out.extend(immediate_spmds(r));
                }
            }
        }
    }
    out
}

fn annotate_region(region: &mut Region, parent: Option<NodeId>) {
    for node in &mut region.nodes {
        let id = node.id;
        if let NodeKind::Spmd(s) = &mut node.kind {
            s.nested_level = Some(chain_depth(&s.body));
            s.nested_parent = parent;
            let children = immediate_spmds(&s.body);
            s.nested_child = match children.as_slice() {
                [only] => Some(*only),
                _ => None,
            };
            annotate_region(&mut s.body, Some(id));
        } else {
            for r in node.regions_mut() {
                annotate_region(r, parent);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_kernel_source;
    use crate::ir::build_upir;

    fn spmds(m: &Module) -> Vec<(NodeId, i64, Option<NodeId>, Option<NodeId>)> {
        let mut out = Vec::new();
        m.walk(&mut |n| {
            if let NodeKind::Spmd(s) = &n.kind {
                out.push((n.id, s.nested_level.unwrap(), s.nested_parent, s.nested_child));
            }
        });
        out
    }

    #[test]
    fn teams_then_parallel_levels() {
        let src = "\
void f(float y[], int n) {
  #pragma omp teams num_teams(2)
  {
    #pragma omp parallel num_threads(4)
    y[0] = 1;
  }
}
";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let m = annotate_nesting(&m).unwrap();
        let s = spmds(&m);
        assert_eq!(s.len(), 2);
        let (outer_id, outer_level, outer_parent, outer_child) = s[0];
        let (inner_id, inner_level, inner_parent, inner_child) = s[1];
        assert_eq!(outer_level, 1);
        assert_eq!(inner_level, 0);
        assert_eq!(outer_parent, None);
        assert_eq!(outer_child, Some(inner_id));
        assert_eq!(inner_parent, Some(outer_id));
        assert_eq!(inner_child, None);
    }

    #[test]
    fn single_spmd_level_zero() {
        let src = "void f(float y[]) {\n#pragma omp parallel\ny[0] = 1;\n}";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let m = annotate_nesting(&m).unwrap();
        let s = spmds(&m);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1, 0);
        assert_eq!(s[0].2, None);
        assert_eq!(s[0].3, None);
    }

    #[test]
    fn three_deep_chain() {
        let src = "\
void f(float y[]) {
  #pragma omp teams
  {
    #pragma omp teams
    {
      #pragma omp parallel
      y[0] = 1;
    }
  }
}
";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let m = annotate_nesting(&m).unwrap();
        let levels: Vec<i64> = spmds(&m).iter().map(|x| x.1).collect();
        assert_eq!(levels, [2, 1, 0]);
    }

    #[test]
    fn idempotent() {
        let src = "void f(float y[]) {\n#pragma omp teams\n{\n#pragma omp parallel\ny[0] = 1;\n}\n}";
        let m = build_upir(&parse_kernel_source(src).unwrap()).unwrap();
        let once = annotate_nesting(&m).unwrap();
        let twice = annotate_nesting(&once).unwrap();
        assert_eq!(once, twice);
    }
}
