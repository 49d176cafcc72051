//! Numeric evaluation: a direct tree walk and a compiled stack tape for hot
//! loops.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::expr::{Expr, Func, Node, Var};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable {0:?}")]
    Unbound(Var),
    #[error("domain error in {op} at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
}

/// Source of variable values.
pub trait Bindings {
    fn value(&self, v: &Var) -> Option<f64>;
}

impl Bindings for BTreeMap<Var, f64> {
    fn value(&self, v: &Var) -> Option<f64> {
        self.get(v).copied()
    }
}

impl Bindings for [(Var, f64)] {
    fn value(&self, v: &Var) -> Option<f64> {
        self.iter().find(|(u, _)| u == v).map(|(_, x)| *x)
    }
}

/// Adapts a closure into [`Bindings`].
pub struct FnBindings<F>(pub F);

impl<F: Fn(&Var) -> Option<f64>> Bindings for FnBindings<F> {
    fn value(&self, v: &Var) -> Option<f64> {
        (self.0)(v)
    }
}

pub fn eval<B: Bindings + ?Sized>(e: &Expr, bindings: &B) -> Result<f64, EvalError> {
    Ok(match e.node() {
        Node::Const(c) => *c,
        Node::Var(v) => bindings.value(v).ok_or_else(|| EvalError::Unbound(v.clone()))?,
        Node::Sum(xs) => {
            let mut acc = 0.0;
            for x in xs {
                acc += eval(x, bindings)?;
            }
            acc
        }
        Node::Product(xs) => {
            let mut acc = 1.0;
            for x in xs {
                acc *= eval(x, bindings)?;
            }
            acc
        }
        Node::Pow(b, ex) => power(eval(b, bindings)?, *ex)?,
        Node::Neg(x) => -eval(x, bindings)?,
        Node::Div(a, b) => divide(eval(a, bindings)?, eval(b, bindings)?)?,
        Node::Func(f, x) => apply(*f, eval(x, bindings)?)?,
    })
}

fn divide(a: f64, b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        return Err(EvalError::Domain { op: "division", arg: b });
    }
    Ok(a / b)
}

pub(crate) fn integer_exponent(ex: f64) -> Option<i32> {
    if libm::trunc(ex) == ex && libm::fabs(ex) <= i32::MAX as f64 {
        Some(ex as i32)
    } else {
        None
    }
}

fn power(base: f64, ex: f64) -> Result<f64, EvalError> {
    if base == 0.0 && ex < 0.0 {
        return Err(EvalError::Domain { op: "power", arg: base });
    }
    match integer_exponent(ex) {
        Some(n) => Ok(powi(base, n)),
        None if base < 0.0 => Err(EvalError::Domain { op: "power", arg: base }),
        None => Ok(libm::pow(base, ex)),
    }
}

fn powi(base: f64, n: i32) -> f64 {
    match n {
        0 => 1.0,
        1 => base,
        2 => base * base,
        3 => base * base * base,
        _ => libm::pow(base, n as f64),
    }
}

pub(crate) fn apply(f: Func, x: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Sin => libm::sin(x),
        Func::Cos => libm::cos(x),
        Func::Exp => libm::exp(x),
        Func::Log => {
            if x <= 0.0 {
                return Err(EvalError::Domain { op: "log", arg: x });
            }
            libm::log(x)
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(EvalError::Domain { op: "sqrt", arg: x });
            }
            libm::sqrt(x)
        }
    })
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Add(usize),
    Mul(usize),
    Pow(f64),
    Neg,
    Div,
    Func(Func),
}

/// An expression flattened to a postfix tape whose variables are resolved to
/// slots of a caller-owned `&[f64]`.
#[derive(Clone, Debug)]
pub struct Compiled {
    ops: Vec<Op>,
    depth: usize,
}

impl Compiled {
    /// `slot` maps each free variable to an index into the evaluation slice.
    pub fn new(e: &Expr, slot: &dyn Fn(&Var) -> Option<usize>) -> Result<Self, EvalError> {
        let mut ops = Vec::new();
        let depth = emit(e, slot, &mut ops)?;
        Ok(Compiled { ops, depth })
    }

    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::with_capacity(self.depth);
        self.eval_with(slots, &mut stack)
    }

    /// Evaluates reusing `stack` as scratch space.
    pub fn eval_with(&self, slots: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        for op in &self.ops {
            match op {
                Op::Const(c) => stack.push(*c),
                Op::Load(i) => stack.push(slots[*i]),
                Op::Add(n) => {
                    let at = stack.len() - n;
                    let s = stack[at..].iter().sum();
                    stack.truncate(at);
                    stack.push(s);
                }
                Op::Mul(n) => {
                    let at = stack.len() - n;
                    let s = stack[at..].iter().product();
                    stack.truncate(at);
                    stack.push(s);
                }
                Op::Pow(ex) => {
                    let b = stack.pop().unwrap();
                    stack.push(power(b, *ex)?);
                }
                Op::Neg => {
                    let x = stack.pop().unwrap();
                    stack.push(-x);
                }
                Op::Div => {
                    let b = stack.pop().unwrap();
                    let a = stack.pop().unwrap();
                    stack.push(divide(a, b)?);
                }
                Op::Func(f) => {
                    let x = stack.pop().unwrap();
                    stack.push(apply(*f, x)?);
                }
            }
        }
        Ok(stack.pop().unwrap_or(0.0))
    }
}

// Returns the stack depth needed by the emitted code.
fn emit(e: &Expr, slot: &dyn Fn(&Var) -> Option<usize>, ops: &mut Vec<Op>) -> Result<usize, EvalError> {
    Ok(match e.node() {
        Node::Const(c) => {
            ops.push(Op::Const(*c));
            1
        }
        Node::Var(v) => {
            ops.push(Op::Load(slot(v).ok_or_else(|| EvalError::Unbound(v.clone()))?));
            1
        }
        Node::Sum(xs) | Node::Product(xs) => {
            let mut depth = 0;
            for (i, x) in xs.iter().enumerate() {
                depth = depth.max(i + emit(x, slot, ops)?);
            }
            ops.push(if matches!(e.node(), Node::Sum(_)) { Op::Add(xs.len()) } else { Op::Mul(xs.len()) });
            depth.max(1)
        }
        Node::Pow(b, ex) => {
            let d = emit(b, slot, ops)?;
            ops.push(Op::Pow(*ex));
            d
        }
        Node::Neg(x) => {
            let d = emit(x, slot, ops)?;
            ops.push(Op::Neg);
            d
        }
        Node::Div(a, b) => {
            let da = emit(a, slot, ops)?;
            let db = emit(b, slot, ops)?;
            ops.push(Op::Div);
            da.max(1 + db)
        }
        Node::Func(f, x) => {
            let d = emit(x, slot, ops)?;
            ops.push(Op::Func(*f));
            d
        }
    })
}
