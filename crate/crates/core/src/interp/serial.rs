//! Serial oracle: executes the base statements in program order, ignoring
//! every parallel annotation. Kept deliberately independent of the parallel
//! engine so the two act as cross-checking routes.

use super::{rt_err, Outcome, RtResult, Value};
use crate::ast::{BinOp, Expr, Intrinsic, ReductionOp, ScalarType};
use crate::ir::*;
use std::collections::{BTreeMap, HashMap};

pub fn interpret_serial(
    module: &Module,
    entry: &str,
    inputs: &BTreeMap<String, Value>,
) -> RtResult<Outcome> {
    let Some(func) = module.function(entry) else {
        return rt_err(format!("entry function `{entry}` not found"));
    };
    let mut st = SerialState { module, vars: HashMap::new(), ledger: Vec::new() };
    for p in &func.params {
        let Some(v) = inputs.get(&p.name) else {
            return rt_err(format!("missing input binding for parameter `{}`", p.name));
        };
        st.vars.insert(p.name.clone(), v.clone());
    }
    st.exec_region(&func.body)?;
    if let Some(open) = st.ledger.iter().find(|l| l.live) {
        return rt_err(format!(
            "allocation ledger not empty at exit: `{}` in {} never deallocated",
            open.symbol, open.space
        ));
    }
    let mut buffers = BTreeMap::new();
    for p in &func.params {
        buffers.insert(p.name.clone(), st.vars[&p.name].clone());
    }
    Ok(Outcome { buffers, trace: Vec::new(), schedule_log: Vec::new(), warnings: Vec::new() })
}

struct Ledger {
    space: String,
    symbol: String,
    live: bool,
}

struct SerialState<'m> {
    module: &'m Module,
    /// One flat namespace; data movement between spaces degenerates to
    /// buffer-to-buffer copies by symbol.
    vars: HashMap<String, Value>,
    ledger: Vec<Ledger>,
}

impl<'m> SerialState<'m> {
    fn exec_region(&mut self, region: &Region) -> RtResult<()> {
        for node in &region.nodes {
            self.exec_node(node)?;
        }
        Ok(())
    }

    fn exec_node(&mut self, node: &Node) -> RtResult<()> {
        match &node.kind {
            // Parallel wrappers evaluate as their bodies.
            NodeKind::Spmd(s) => self.exec_region(&s.body),
            NodeKind::Task(t) => self.exec_region(&t.body),
            NodeKind::DataRegion(d) => self.exec_region(&d.body),
            NodeKind::Loop(l) => self.exec_loop(l),
            NodeKind::Sync(s) => match &s.body {
                Some(body) => self.exec_region(body),
                None => Ok(()),
            },
            NodeKind::Ext(_) => Ok(()),
            NodeKind::If(i) => {
                if truthy(&self.eval(&i.cond)?) {
                    self.exec_region(&i.then_region)
                } else if let Some(e) = &i.else_region {
                    self.exec_region(e)
                } else {
                    Ok(())
                }
            }
            NodeKind::BaseFor(f) => {
                let init = self.eval(&f.init)?;
                self.vars.insert(f.var.clone(), init);
                loop {
                    if !truthy(&self.eval(&f.cond)?) {
                        return Ok(());
                    }
                    self.exec_region(&f.body)?;
                    let step = self.eval(&f.step)?;
                    let next = int_add(self.get(&f.var)?, &step)?;
                    self.vars.insert(f.var.clone(), next);
                }
            }
            NodeKind::Decl { ty, name, init } => {
                let v = match init {
                    Some(e) => coerce(self.eval(e)?, *ty),
                    None => match ty {
                        ScalarType::Int => Value::Int(0),
                        _ => Value::Float(0.0),
                    },
                };
                self.vars.insert(name.clone(), v);
                Ok(())
            }
            NodeKind::Assign { base, indices, value } => {
                let v = self.eval(value)?;
                self.store(base, indices, v)
            }
            NodeKind::Call { callee, args } => self.call(callee, args),
            NodeKind::Return(_) => Ok(()),
            NodeKind::DataUpdate(_) => Ok(()),
            NodeKind::DataMovement(m) => {
                let size = match self.eval(&m.size)? {
                    Value::Int(v) => v,
                    _ => return rt_err("data movement size must be an integer"),
                };
                if size <= 0 {
                    return rt_err("data movement size must be positive");
                }
                let src = self.get(&m.src)?.clone();
                let elems = (size / 8) as usize;
                let dest = self.vars.entry(m.dest.clone()).or_insert_with(|| match &src {
                    Value::IntArr { dims, .. } => Value::zero_array(false, dims.clone()),
                    Value::FloatArr { dims, .. } => Value::zero_array(true, dims.clone()),
                    v => v.clone(),
                });
                copy_elems(&src, dest, elems)
            }
            NodeKind::MmAlloc(a) => {
                let size = match self.eval(&a.size)? {
                    Value::Int(v) => v,
                    _ => return rt_err("allocation size must be an integer"),
                };
                if size <= 0 {
                    return rt_err("allocation size must be positive");
                }
                self.vars.insert(a.symbol.clone(), Value::zero_array(true, vec![(size / 8) as usize]));
                self.ledger.push(Ledger { space: "host".into(), symbol: a.symbol.clone(), live: true });
                Ok(())
            }
            NodeKind::MmDealloc(d) => {
                match self.ledger.iter_mut().rev().find(|l| l.symbol == d.symbol && l.live) {
                    Some(entry) => {
                        entry.live = false;
                        self.vars.remove(&d.symbol);
                        Ok(())
                    }
                    None => rt_err(format!("deallocation of `{}` without a live allocation", d.symbol)),
                }
            }
        }
    }

    fn exec_loop(&mut self, l: &LoopNode) -> RtResult<()> {
        let lower = self.int_of(&l.lower)?;
        let upper = self.int_of(&l.upper)?;
        let step = self.int_of(&l.step)?;
        if step <= 0 {
            return rt_err("loop step must be positive");
        }
        let mut i = lower;
        while i < upper {
            self.vars.insert(l.induction.clone(), Value::Int(i));
            self.exec_region(&l.body)?;
            i += step;
        }
        Ok(())
    }

    fn call(&mut self, callee: &str, args: &[Expr]) -> RtResult<()> {
        let Some(f) = self.module.function(callee) else {
            return rt_err(format!("callee `{callee}` not found"));
        };
        let mut vals = Vec::new();
        for a in args {
            vals.push(self.eval(a)?);
        }
        // Arrays pass by reference: move them in, write them back after.
        let saved: Vec<(String, Option<Value>)> =
            f.params.iter().map(|p| (p.name.clone(), self.vars.get(&p.name).cloned())).collect();
        let mut arg_names: Vec<Option<String>> = Vec::new();
        for (p, (a, v)) in f.params.iter().zip(args.iter().zip(vals)) {
            let name = match a {
                Expr::Ident(n) if v.is_array() => Some(n.clone()),
                _ => None,
            };
            arg_names.push(name);
            self.vars.insert(p.name.clone(), v);
        }
        self.exec_region(&f.body)?;
        let outs: Vec<Value> = f.params.iter().map(|p| self.vars[&p.name].clone()).collect();
        for (name, old) in saved {
            match old {
                Some(v) => {
                    self.vars.insert(name, v);
                }
                None => {
                    self.vars.remove(&name);
                }
            }
        }
        for (caller_name, out) in arg_names.into_iter().zip(outs) {
            if let Some(n) = caller_name {
                self.vars.insert(n, out);
            }
        }
        Ok(())
    }

    fn get(&self, name: &str) -> RtResult<&Value> {
        self.vars.get(name).ok_or_else(|| super::RtError(format!("read of unbound symbol `{name}`")))
    }

    fn int_of(&mut self, e: &Expr) -> RtResult<i64> {
        match self.eval(e)? {
            Value::Int(v) => Ok(v),
            _ => rt_err("expected integer value"),
        }
    }

    fn eval(&mut self, e: &Expr) -> RtResult<Value> {
        match e {
            Expr::IntLit(v) => Ok(Value::Int(*v)),
            Expr::FloatLit(v) => Ok(Value::Float(*v)),
            Expr::Ident(n) => Ok(self.get(n)?.clone()),
            Expr::Index { base, indices } => {
                let mut idx = Vec::new();
                for i in indices {
                    idx.push(self.int_of(i)?);
                }
                index_value(self.get(base)?, &idx, base)
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                binop(*op, a, b)
            }
            Expr::Neg(inner) => match self.eval(inner)? {
                Value::Int(v) => Ok(Value::Int(-v)),
                Value::Float(v) => Ok(Value::Float(-v)),
                _ => rt_err("cannot negate an array"),
            },
            // Serial mode runs as a single unit.
            Expr::Intrinsic(Intrinsic::UnitId) => Ok(Value::Int(0)),
            Expr::Intrinsic(Intrinsic::TeamId) => Ok(Value::Int(0)),
            Expr::Intrinsic(Intrinsic::UnitsPerTeam) => Ok(Value::Int(1)),
        }
    }

    fn store(&mut self, base: &str, indices: &[Expr], v: Value) -> RtResult<()> {
        if indices.is_empty() {
            let slot = self
                .vars
                .get_mut(base)
                .ok_or_else(|| super::RtError(format!("write to unbound symbol `{base}`")))?;
            let coerced = match (&slot, &v) {
                (Value::Int(_), Value::Float(_)) => return rt_err("cannot store float into int"),
                (Value::Float(_), Value::Int(i)) => Value::Float(*i as f64),
                _ => v,
            };
            *slot = coerced;
            return Ok(());
        }
        let mut idx = Vec::new();
        for i in indices {
            idx.push(self.int_of(i)?);
        }
        let slot = self
            .vars
            .get_mut(base)
            .ok_or_else(|| super::RtError(format!("write to unbound symbol `{base}`")))?;
        store_indexed(slot, &idx, v, base)
    }
}

// ---------------------------------------------------------------------------
// Shared value helpers (also used by the parallel machine)
// ---------------------------------------------------------------------------

pub(crate) fn truthy(v: &Value) -> bool {
    match v {
        Value::Int(v) => *v != 0,
        Value::Float(v) => *v != 0.0,
        _ => true,
    }
}

pub(crate) fn coerce(v: Value, ty: ScalarType) -> Value {
    match (ty, v) {
        (ScalarType::Int, Value::Float(f)) => Value::Int(f as i64),
        (ScalarType::Float | ScalarType::Double, Value::Int(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

pub(crate) fn int_add(a: &Value, b: &Value) -> RtResult<Value> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(Value::Int(x + y)),
        _ => rt_err("loop increment must be an integer"),
    }
}

pub(crate) fn flat_index(dims: &[usize], idx: &[i64], base: &str) -> RtResult<usize> {
    if dims.len() != idx.len() {
        return rt_err(format!("`{base}` indexed with {} subscripts but has rank {}", idx.len(), dims.len()));
    }
    let mut flat = 0usize;
    for (d, i) in dims.iter().zip(idx) {
        if *i < 0 || *i as usize >= *d {
            return rt_err(format!("index {i} out of bounds for `{base}` (extent {d})"));
        }
        flat = flat * d + *i as usize;
    }
    Ok(flat)
}

pub(crate) fn index_value(v: &Value, idx: &[i64], base: &str) -> RtResult<Value> {
    match v {
        Value::IntArr { dims, data } => Ok(Value::Int(data[flat_index(dims, idx, base)?])),
        Value::FloatArr { dims, data } => Ok(Value::Float(data[flat_index(dims, idx, base)?])),
        _ => rt_err(format!("`{base}` is not an array")),
    }
}

pub(crate) fn store_indexed(slot: &mut Value, idx: &[i64], v: Value, base: &str) -> RtResult<()> {
    match slot {
        Value::IntArr { dims, data } => {
            let flat = flat_index(dims, idx, base)?;
            data[flat] = match v {
                Value::Int(x) => x,
                Value::Float(_) => return rt_err("cannot store float into int array"),
                _ => return rt_err("cannot store array into element"),
            };
            Ok(())
        }
        Value::FloatArr { dims, data } => {
            let flat = flat_index(dims, idx, base)?;
            data[flat] = match v {
                Value::Int(x) => x as f64,
                Value::Float(x) => x,
                _ => return rt_err("cannot store array into element"),
            };
            Ok(())
        }
        _ => rt_err(format!("`{base}` is not an array")),
    }
}

pub(crate) fn binop(op: BinOp, a: Value, b: Value) -> RtResult<Value> {
    use Value::*;
    let float = matches!(a, Float(_)) || matches!(b, Float(_));
    if op.is_comparison() {
        let r = if float {
            let (x, y) = (as_f(&a)?, as_f(&b)?);
            match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                BinOp::Ge => x >= y,
                BinOp::Eq => x == y,
                BinOp::Ne => x != y,
                _ => unreachable!(),
            }
        } else {
            let (x, y) = (as_i(&a)?, as_i(&b)?);
            match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                BinOp::Ge => x >= y,
                BinOp::Eq => x == y,
                BinOp::Ne => x != y,
                _ => unreachable!(),
            }
        };
        return Ok(Int(r as i64));
    }
    if float {
        let (x, y) = (as_f(&a)?, as_f(&b)?);
        let r = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => {
                if y == 0.0 {
                    return rt_err("division by zero");
                }
                x / y
            }
            BinOp::Rem => return rt_err("`%` requires integer operands"),
            _ => unreachable!(),
        };
        Ok(Float(r))
    } else {
        let (x, y) = (as_i(&a)?, as_i(&b)?);
        let r = match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => {
                if y == 0 {
                    return rt_err("division by zero");
                }
                x / y
            }
            BinOp::Rem => {
                if y == 0 {
                    return rt_err("remainder by zero");
                }
                x % y
            }
            _ => unreachable!(),
        };
        Ok(Int(r))
    }
}

fn as_f(v: &Value) -> RtResult<f64> {
    match v {
        Value::Int(x) => Ok(*x as f64),
        Value::Float(x) => Ok(*x),
        _ => rt_err("array used as scalar"),
    }
}

fn as_i(v: &Value) -> RtResult<i64> {
    match v {
        Value::Int(x) => Ok(*x),
        _ => rt_err("expected integer"),
    }
}

pub(crate) fn reduce_combine(op: ReductionOp, acc: Value, v: Value) -> RtResult<Value> {
    let bin = match op {
        ReductionOp::Add => BinOp::Add,
        ReductionOp::Sub => BinOp::Sub,
        ReductionOp::Mul => BinOp::Mul,
        ReductionOp::Min | ReductionOp::Max => {
            let take_v = match (&acc, &v, op) {
                (Value::Int(a), Value::Int(b), ReductionOp::Min) => b < a,
                (Value::Int(a), Value::Int(b), ReductionOp::Max) => b > a,
                (Value::Float(a), Value::Float(b), ReductionOp::Min) => b < a,
                (Value::Float(a), Value::Float(b), ReductionOp::Max) => b > a,
                _ => return rt_err("mismatched reduction operand types"),
            };
            return Ok(if take_v { v } else { acc });
        }
    };
    binop(bin, acc, v)
}

/// Identity element used to seed per-unit reduction copies.
pub(crate) fn reduction_identity(op: ReductionOp, like: &Value) -> Value {
    let float = matches!(like, Value::Float(_));
    match (op, float) {
        (ReductionOp::Add | ReductionOp::Sub, false) => Value::Int(0),
        (ReductionOp::Add | ReductionOp::Sub, true) => Value::Float(0.0),
        (ReductionOp::Mul, false) => Value::Int(1),
        (ReductionOp::Mul, true) => Value::Float(1.0),
        (ReductionOp::Min, false) => Value::Int(i64::MAX),
        (ReductionOp::Min, true) => Value::Float(f64::INFINITY),
        (ReductionOp::Max, false) => Value::Int(i64::MIN),
        (ReductionOp::Max, true) => Value::Float(f64::NEG_INFINITY),
    }
}

fn copy_elems(src: &Value, dest: &mut Value, elems: usize) -> RtResult<()> {
    match (src, dest) {
        (Value::IntArr { data: s, .. }, Value::IntArr { data: d, .. }) => {
            let n = elems.min(s.len()).min(d.len());
            d[..n].copy_from_slice(&s[..n]);
            Ok(())
        }
        (Value::FloatArr { data: s, .. }, Value::FloatArr { data: d, .. }) => {
            let n = elems.min(s.len()).min(d.len());
            d[..n].copy_from_slice(&s[..n]);
            Ok(())
        }
        (s, d) => {
            *d = s.clone();
            Ok(())
        }
    }
}
