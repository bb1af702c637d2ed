//! Loop-nest collapsing: a perfectly nested rectangular canonical nest of
//! depth >= k becomes one loop over the product space, with the original
//! indices reconstructed by div/mod in the body prologue.

use crate::ast::{BinOp, Expr, ScalarType};
use crate::diag::{Diag, Pos, Result};
use crate::ir::*;
use std::collections::HashSet;

/// Collapse every loop whose collapse field is >= 2, module wide.
pub fn collapse_loops(module: &Module) -> Result<Module> {
    let mut m = module.clone();
    let mut next = 0u32;
    m.walk(&mut |n| next = next.max(n.id.0 + 1));
    for f in 0..m.functions.len() {
        let mut symbols: HashSet<String> = m.functions[f].params.iter().map(|p| p.name.clone()).collect();
        collect_symbols(&m.functions[f].body, &mut symbols);
        let mut body = std::mem::take(&mut m.functions[f].body);
        collapse_region(&mut body, &mut symbols, &mut next)?;
        m.functions[f].body = body;
    }
    Ok(m)
}

fn collect_symbols(region: &Region, out: &mut HashSet<String>) {
    for n in &region.nodes {
        match &n.kind {
            NodeKind::Decl { name, .. } => {
                out.insert(name.clone());
            }
            NodeKind::Loop(l) => {
                out.insert(l.induction.clone());
            }
            NodeKind::BaseFor(b) => {
                out.insert(b.var.clone());
            }
            _ => {}
        }
        for r in n.regions() {
            collect_symbols(r, out);
        }
    }
}

fn collapse_region(region: &mut Region, symbols: &mut HashSet<String>, next: &mut u32) -> Result<()> {
    for node in &mut region.nodes {
        if let NodeKind::Loop(l) = &node.kind {
            if l.collapse >= 2 {
                let collapsed = collapse_loop_node(l, symbols, next)?;
                node.kind = NodeKind::Loop(collapsed);
            }
        }
        for r in node.regions_mut() {
            collapse_region(r, symbols, next)?;
        }
    }
    Ok(())
}

/// Collapse one loop with collapse = k into a single canonical loop.
pub fn collapse_loop_node(
    l: &LoopNode,
    symbols: &mut HashSet<String>,
    next: &mut u32,
) -> Result<LoopNode> {
    let k = l.collapse;
    if k < 2 {
        return Ok(l.clone());
    }
    // Gather the perfect nest of depth k.
    let mut levels: Vec<&LoopNode> = vec![l];
    let mut cur = l;
    for depth in 1..k {
        match cur.body.nodes.as_slice() {
            [Node { kind: NodeKind::Loop(inner), .. }] => {
                if inner.parallel.is_some() || !inner.sync.is_empty() {
                    return Err(err("collapse target has an annotated inner loop"));
                }
                levels.push(inner);
                cur = inner;
            }
            _ => {
                return Err(err(format!(
                    "collapse({k}) needs a perfectly nested canonical nest of depth {k}, found depth {depth}"
                )))
            }
        }
    }
    // Rectangular: no inner bound may depend on an outer induction variable.
    let outer_vars: Vec<&str> = levels.iter().map(|lv| lv.induction.as_str()).collect();
    for (i, lv) in levels.iter().enumerate().skip(1) {
        for e in [&lv.lower, &lv.upper, &lv.step] {
            let mut syms = Vec::new();
            e.referenced_symbols(&mut syms);
            if syms.iter().any(|s| outer_vars[..i].contains(&s.as_str())) {
                return Err(err(format!(
                    "non-rectangular nest: bounds of `{}` depend on an outer index",
                    lv.induction
                )));
            }
        }
    }
    let trips: Vec<Expr> = levels
        .iter()
        .map(|lv| {
            Expr::bin(
                BinOp::Div,
                Expr::bin(
                    BinOp::Add,
                    Expr::bin(BinOp::Sub, lv.upper.clone(), lv.lower.clone()),
                    Expr::bin(BinOp::Sub, lv.step.clone(), Expr::IntLit(1)),
                ),
                lv.step.clone(),
            )
            .fold()
        })
        .collect();
    let total = trips
        .iter()
        .cloned()
        .reduce(|a, b| Expr::bin(BinOp::Mul, a, b).fold())
        .unwrap();

    let mut var = levels.iter().map(|lv| lv.induction.clone()).collect::<Vec<_>>().join("_");
    while symbols.contains(&var) {
        var.push('_');
    }
    symbols.insert(var.clone());

    // Index reconstruction: level i owns (t / prod(trips[i+1..])) % trips[i].
    let mut prologue: Vec<Node> = Vec::new();
    for (i, lv) in levels.iter().enumerate() {
        let mut quotient = Expr::ident(&var);
        let tail: Option<Expr> =
            trips[i + 1..].iter().cloned().reduce(|a, b| Expr::bin(BinOp::Mul, a, b).fold());
        if let Some(t) = tail {
            quotient = Expr::bin(BinOp::Div, quotient, t);
        }
        let index = if i == 0 { quotient } else { Expr::bin(BinOp::Rem, quotient, trips[i].clone()) };
        let value = Expr::bin(
            BinOp::Add,
            lv.lower.clone(),
            Expr::bin(BinOp::Mul, index, lv.step.clone()),
        )
        .fold();
        prologue.push(Node {
            id: fresh(next),
            kind: NodeKind::Decl { ty: ScalarType::Int, name: lv.induction.clone(), init: Some(value) },
        });
    }
    let innermost = levels.last().unwrap();
    let mut body_nodes = prologue;
    body_nodes.extend(innermost.body.nodes.iter().cloned());

    Ok(LoopNode {
        induction: var,
        lower: Expr::IntLit(0),
        upper: total,
        step: Expr::IntLit(1),
        data: l.data.clone(),
        collapse: 1,
        sync: l.sync.clone(),
        nowait: l.nowait,
        parallel: l.parallel.clone(),
        body: Region::new(body_nodes),
    })
}

fn fresh(next: &mut u32) -> NodeId {
    let id = NodeId(*next);
    *next += 1;
    id
}

fn err(msg: impl Into<String>) -> Diag {
    Diag::new(Pos::default(), msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::frontend::parse_kernel_source;
    use crate::interp::{interpret, Options, Value};
    use crate::ir::build_upir;
    use std::collections::BTreeMap;

    fn analyzed(src: &str) -> Module {
        analysis::run_all(&build_upir(&parse_kernel_source(src).unwrap()).unwrap()).unwrap()
    }

    /// Brute-force oracle: enumerate the (i, j) pairs both loop forms visit.
    fn visited_pairs(m: &Module, rows: i64, cols: i64) -> Vec<(i64, i64)> {
        let n = (rows * cols) as usize;
        let inputs = BTreeMap::from([
            ("r".to_string(), Value::IntArr { dims: vec![n], data: vec![0; n] }),
            ("c".to_string(), Value::IntArr { dims: vec![1], data: vec![0] }),
            ("rows".to_string(), Value::Int(rows)),
            ("cols".to_string(), Value::Int(cols)),
        ]);
        let opts = Options { units_override: Some(1), ..Options::default() };
        let out = interpret(m, "f", &inputs, &opts).unwrap();
        let Value::IntArr { data, .. } = &out.buffers["r"] else { panic!() };
        data.iter().map(|v| (v / 100, v % 100)).collect()
    }

    const NEST: &str = "\
void f(int r[], int c[], int rows, int cols) {
  #pragma omp parallel for collapse(2)
  for (int i = 0; i < rows; i++)
    for (int j = 0; j < cols; j++) {
      r[c[0]] = i * 100 + j;
      c[0] = c[0] + 1;
    }
}
";

    #[test]
    fn collapse2_visits_same_pairs_in_order() {
        let m = analyzed(NEST);
        let collapsed = collapse_loops(&m).unwrap();
        validate(&collapsed).unwrap();
        let a = visited_pairs(&m, 4, 3);
        let b = visited_pairs(&collapsed, 4, 3);
        let expect: Vec<(i64, i64)> =
            (0..4).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        assert_eq!(a, expect);
        assert_eq!(b, expect, "collapsed form visits the same 12 pairs in lexicographic order");
    }

    #[test]
    fn collapsed_loop_shape() {
        let m = analyzed(NEST);
        let collapsed = collapse_loops(&m).unwrap();
        let mut found = false;
        collapsed.walk(&mut |n| {
            if let NodeKind::Loop(l) = &n.kind {
                assert_eq!(l.collapse, 1);
                assert!(l.parallel.is_some());
                assert_eq!(l.induction, "i_j");
                found = true;
            }
        });
        assert!(found);
    }

    #[test]
    fn collapse1_is_identity() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for collapse(1)
  for (int i = 0; i < n; i++)
    y[i] = i;
}
";
        let m = analyzed(src);
        let out = collapse_loops(&m).unwrap();
        assert_eq!(canonicalize(&m), canonicalize(&out));
    }

    #[test]
    fn triangular_nest_rejected() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for collapse(2)
  for (int i = 0; i < n; i++)
    for (int j = 0; j < i; j++)
      y[j] = i;
}
";
        let m = analyzed(src);
        let err = collapse_loops(&m).unwrap_err();
        assert!(err.msg.contains("non-rectangular"), "{err}");
    }

    #[test]
    fn imperfect_nest_rejected_at_build() {
        let src = "\
void f(int y[], int n) {
  #pragma omp parallel for collapse(2)
  for (int i = 0; i < n; i++) {
    y[i] = 0;
    for (int j = 0; j < n; j++)
      y[j] = i;
  }
}
";
        // collapse(2) over an imperfect nest already fails structural
        // validation when the module is built.
        let err = build_upir(&parse_kernel_source(src).unwrap()).unwrap_err();
        assert!(err.msg.contains("collapse"), "{err}");
    }

    #[test]
    fn exhaustive_small_nests_match_product_enumeration() {
        // rectangular nests with trip counts <= 12 per dimension
        for rows in [1i64, 2, 5, 12] {
            for cols in [1i64, 3, 12] {
                let m = analyzed(NEST);
                let collapsed = collapse_loops(&m).unwrap();
                let a = visited_pairs(&m, rows, cols);
                let b = visited_pairs(&collapsed, rows, cols);
                assert_eq!(a, b, "rows={rows} cols={cols}");
                assert_eq!(a.len() as i64, rows * cols);
            }
        }
    }
}
