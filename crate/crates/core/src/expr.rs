//! Immutable expression trees over jet coordinates, momenta, time and
//! parameters.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops;

/// A symbol an expression can depend on.
///
/// Degree-of-freedom indices are stored zero-based; the textual form
/// (`q2_1`, `p0_3`) is one-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// The base coordinate `t`.
    Time,
    /// Jet coordinate `q_order^dof`.
    Jet { dof: usize, order: usize },
    /// Momentum `p_dof^level`, `level < k`.
    Momentum { dof: usize, level: usize },
    /// The extra coordinate `p` of the extended unified bundle.
    ExtMomentum,
    /// A named model parameter.
    Param(String),
}

impl Var {
    pub fn jet(dof: usize, order: usize) -> Self {
        Var::Jet { dof, order }
    }

    pub fn momentum(dof: usize, level: usize) -> Self {
        Var::Momentum { dof, level }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Const(f64),
    Var(Var),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// Base raised to a literal exponent.
    Pow(Expr, f64),
    Neg(Expr),
    Div(Expr, Expr),
    Func(Func, Expr),
}

/// Shared handle to an immutable [`Node`]. Cloning is cheap.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Expr::new(Node::Const(value))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    pub fn var(v: Var) -> Self {
        Expr::new(Node::Var(v))
    }

    pub fn time() -> Self {
        Expr::var(Var::Time)
    }

    pub fn jet(dof: usize, order: usize) -> Self {
        Expr::var(Var::jet(dof, order))
    }

    pub fn momentum(dof: usize, level: usize) -> Self {
        Expr::var(Var::momentum(dof, level))
    }

    pub fn param(name: &str) -> Self {
        Expr::var(Var::Param(name.into()))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    /// Sum that drops literal zeros and collapses trivial cases.
    pub fn sum(terms: Vec<Expr>) -> Self {
        let mut kept: Vec<Expr> = terms.into_iter().filter(|t| !t.is_const(0.0)).collect();
        match kept.len() {
            0 => Expr::zero(),
            1 => kept.pop().unwrap(),
            _ => Expr::new(Node::Sum(kept)),
        }
    }

    /// Product that drops literal ones and short-circuits on a literal zero.
    pub fn product(factors: Vec<Expr>) -> Self {
        if factors.iter().any(|f| f.is_const(0.0)) {
            return Expr::zero();
        }
        let mut kept: Vec<Expr> = factors.into_iter().filter(|f| !f.is_const(1.0)).collect();
        match kept.len() {
            0 => Expr::one(),
            1 => kept.pop().unwrap(),
            _ => Expr::new(Node::Product(kept)),
        }
    }

    pub fn pow(self, exponent: f64) -> Self {
        if exponent == 1.0 {
            self
        } else if exponent == 0.0 {
            Expr::one()
        } else {
            Expr::new(Node::Pow(self, exponent))
        }
    }

    pub fn apply(func: Func, arg: Expr) -> Self {
        Expr::new(Node::Func(func, arg))
    }

    pub fn sin(self) -> Self {
        Expr::apply(Func::Sin, self)
    }

    pub fn cos(self) -> Self {
        Expr::apply(Func::Cos, self)
    }

    pub fn exp(self) -> Self {
        Expr::apply(Func::Exp, self)
    }

    pub fn log(self) -> Self {
        Expr::apply(Func::Log, self)
    }

    pub fn sqrt(self) -> Self {
        Expr::apply(Func::Sqrt, self)
    }

    /// Every variable occurring in the tree.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::Sum(xs) | Node::Product(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Node::Pow(b, _) => b.collect_vars(out),
            Node::Neg(x) | Node::Func(_, x) => x.collect_vars(out),
            Node::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, v: &Var) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(u) => u == v,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().any(|x| x.depends_on(v)),
            Node::Pow(b, _) => b.depends_on(v),
            Node::Neg(x) | Node::Func(_, x) => x.depends_on(v),
            Node::Div(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// Highest jet order present, if any jet variable occurs.
    pub fn max_jet_order(&self) -> Option<usize> {
        self.free_vars()
            .iter()
            .filter_map(|v| match v {
                Var::Jet { order, .. } => Some(*order),
                _ => None,
            })
            .max()
    }

    /// Replaces variables for which `f` returns a replacement.
    pub fn substitute(&self, f: &dyn Fn(&Var) -> Option<Expr>) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Node::Sum(xs) => Expr::new(Node::Sum(xs.iter().map(|x| x.substitute(f)).collect())),
            Node::Product(xs) => {
                Expr::new(Node::Product(xs.iter().map(|x| x.substitute(f)).collect()))
            }
            Node::Pow(b, e) => Expr::new(Node::Pow(b.substitute(f), *e)),
            Node::Neg(x) => Expr::new(Node::Neg(x.substitute(f))),
            Node::Div(a, b) => Expr::new(Node::Div(a.substitute(f), b.substitute(f))),
            Node::Func(g, x) => Expr::new(Node::Func(*g, x.substitute(f))),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Const(_) | Node::Var(_) => 0,
            Node::Sum(xs) | Node::Product(xs) => xs.iter().map(Expr::size).sum(),
            Node::Pow(b, _) => b.size(),
            Node::Neg(x) | Node::Func(_, x) => x.size(),
            Node::Div(a, b) => a.size() + b.size(),
        }
    }

    /// Text in the input grammar, using the `qI_A` form when `dofs > 1`.
    pub fn display(&self, dofs: usize) -> Printer<'_> {
        Printer { expr: self, dofs }
    }

    fn tag(&self) -> u8 {
        match self.node() {
            Node::Const(_) => 0,
            Node::Var(_) => 1,
            Node::Pow(..) => 2,
            Node::Product(_) => 3,
            Node::Sum(_) => 4,
            Node::Div(..) => 5,
            Node::Neg(_) => 6,
            Node::Func(..) => 7,
        }
    }

    /// Total structural order. Constants compare by `f64::total_cmp`.
    pub fn cmp_structural(&self, other: &Expr) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.total_cmp(b),
            (Node::Var(a), Node::Var(b)) => a.cmp(b),
            (Node::Pow(a, x), Node::Pow(b, y)) => {
                a.cmp_structural(b).then_with(|| x.total_cmp(y))
            }
            (Node::Sum(a), Node::Sum(b)) | (Node::Product(a), Node::Product(b)) => {
                cmp_slices(a, b)
            }
            (Node::Div(a1, a2), Node::Div(b1, b2)) => {
                a1.cmp_structural(b1).then_with(|| a2.cmp_structural(b2))
            }
            (Node::Neg(a), Node::Neg(b)) => a.cmp_structural(b),
            (Node::Func(f, a), Node::Func(g, b)) => f.cmp(g).then_with(|| a.cmp_structural(b)),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

fn cmp_slices(a: &[Expr], b: &[Expr]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.cmp_structural(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_structural(other) == Ordering::Equal
    }
}

impl Eq for Expr {}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dofs = if self.free_vars().iter().any(|v| {
            matches!(v, Var::Jet { dof, .. } | Var::Momentum { dof, .. } if *dof > 0)
        }) {
            2
        } else {
            1
        };
        write!(f, "{}", self.display(dofs))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl From<Var> for Expr {
    fn from(v: Var) -> Self {
        Expr::var(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, Expr::constant(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(Expr::constant(self), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum(alloc::vec![a, b]));
binop!(Sub, sub, |a, b| Expr::sum(alloc::vec![a, -b]));
binop!(Mul, mul, |a, b| Expr::product(alloc::vec![a, b]));
binop!(Div, div, |a, b| Expr::new(Node::Div(a, b)));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(x) => x.clone(),
            _ => Expr::new(Node::Neg(self)),
        }
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -(self.clone())
    }
}

/// Grammar-compatible printer returned by [`Expr::display`].
pub struct Printer<'a> {
    expr: &'a Expr,
    dofs: usize,
}

// Binding strength used to decide parenthesisation.
const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Printer<'_> {
    fn var(&self, v: &Var, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match v {
            Var::Time => f.write_str("t"),
            Var::Jet { dof, order } => {
                if self.dofs > 1 {
                    write!(f, "q{}_{}", order, dof + 1)
                } else {
                    write!(f, "q{}", order)
                }
            }
            Var::Momentum { dof, level } => {
                if self.dofs > 1 {
                    write!(f, "p{}_{}", level, dof + 1)
                } else {
                    write!(f, "p{}", level)
                }
            }
            Var::ExtMomentum => f.write_str("p"),
            Var::Param(name) => f.write_str(name),
        }
    }

    fn prec(e: &Expr) -> u8 {
        match e.node() {
            Node::Const(c) if *c < 0.0 => PREC_UNARY,
            Node::Const(_) | Node::Var(_) | Node::Func(..) => PREC_ATOM,
            Node::Pow(..) => 4,
            Node::Neg(_) => PREC_UNARY,
            Node::Product(xs) => match xs.first().and_then(Expr::as_const) {
                Some(c) if c < 0.0 => PREC_UNARY,
                _ => PREC_PRODUCT,
            },
            Node::Div(..) => PREC_PRODUCT,
            Node::Sum(_) => PREC_SUM,
        }
    }

    fn write(&self, e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if Self::prec(e) < min_prec {
            f.write_str("(")?;
            self.write(e, 0, f)?;
            return f.write_str(")");
        }
        match e.node() {
            Node::Const(c) => write_number(*c, f),
            Node::Var(v) => self.var(v, f),
            Node::Sum(terms) => {
                for (i, term) in terms.iter().enumerate() {
                    match (i, negated(term)) {
                        (0, _) => self.write(term, PREC_SUM, f)?,
                        (_, Some(pos)) => {
                            f.write_str(" - ")?;
                            self.write(&pos, PREC_PRODUCT, f)?;
                        }
                        (_, None) => {
                            f.write_str(" + ")?;
                            self.write(term, PREC_PRODUCT, f)?;
                        }
                    }
                }
                Ok(())
            }
            Node::Product(factors) => {
                let mut rest: &[Expr] = factors;
                if let Some(c) = factors.first().and_then(Expr::as_const) {
                    if c < 0.0 {
                        f.write_str("-")?;
                        if c == -1.0 && factors.len() > 1 {
                            rest = &factors[1..];
                        } else {
                            write_number(-c, f)?;
                            if factors.len() > 1 {
                                f.write_str("*")?;
                            }
                            rest = &factors[1..];
                        }
                    }
                }
                for (i, x) in rest.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    // Right operands of `*` are parenthesised when they are
                    // quotients so the printed text keeps the tree shape.
                    let p = if i > 0 { PREC_UNARY } else { PREC_PRODUCT };
                    let p = if matches!(x.node(), Node::Const(c) if *c < 0.0) { PREC_ATOM } else { p };
                    self.write(x, p, f)?;
                }
                Ok(())
            }
            Node::Pow(b, ex) => {
                self.write(b, PREC_ATOM, f)?;
                f.write_str("^")?;
                if *ex < 0.0 {
                    f.write_str("(")?;
                    write_number(*ex, f)?;
                    f.write_str(")")
                } else {
                    write_number(*ex, f)
                }
            }
            Node::Neg(x) => {
                f.write_str("-")?;
                self.write(x, PREC_UNARY + 1, f)
            }
            Node::Div(a, b) => {
                self.write(a, PREC_PRODUCT, f)?;
                f.write_str("/")?;
                self.write(b, PREC_UNARY, f)
            }
            Node::Func(g, x) => {
                write!(f, "{}(", g.name())?;
                self.write(x, 0, f)?;
                f.write_str(")")
            }
        }
    }
}

// Positive counterpart of a term that prints with a leading minus.
fn negated(term: &Expr) -> Option<Expr> {
    match term.node() {
        Node::Const(c) if *c < 0.0 => Some(Expr::constant(-c)),
        Node::Neg(x) => Some(x.clone()),
        Node::Product(xs) => match xs.first().and_then(Expr::as_const) {
            Some(c) if c < 0.0 => {
                let mut rest: Vec<Expr> = Vec::with_capacity(xs.len());
                if c != -1.0 {
                    rest.push(Expr::constant(-c));
                }
                rest.extend(xs[1..].iter().cloned());
                Some(if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::new(Node::Product(rest))
                })
            }
            _ => None,
        },
        _ => None,
    }
}

fn write_number(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c < 0.0 {
        f.write_str("-")?;
        return write_number(-c, f);
    }
    // `{}` on f64 is the shortest representation that round-trips.
    write!(f, "{}", c)
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, 0, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn smart_constructors_fold_identities() {
        let q = Expr::jet(0, 1);
        assert_eq!(Expr::sum(alloc::vec![Expr::zero(), q.clone()]), q);
        assert_eq!(Expr::product(alloc::vec![Expr::one(), q.clone()]), q);
        assert!(Expr::product(alloc::vec![Expr::zero(), q.clone()]).is_const(0.0));
    }

    #[test]
    fn printing_uses_dof_suffix_only_for_multiple_dofs() {
        let e = Expr::jet(0, 2) * Expr::momentum(1, 0);
        assert_eq!(e.display(2).to_string(), "q2_1*p0_2");
        assert_eq!(Expr::jet(0, 3).display(1).to_string(), "q3");
    }

    #[test]
    fn printing_negative_terms() {
        let e = Expr::sum(alloc::vec![
            Expr::jet(0, 4),
            Expr::product(alloc::vec![Expr::constant(-5.0), Expr::jet(0, 2)]),
            Expr::constant(-1.5),
        ]);
        assert_eq!(e.display(1).to_string(), "q4 - 5*q2 - 1.5");
        let p = Expr::jet(0, 0).pow(-2.0);
        assert_eq!(p.display(1).to_string(), "q0^(-2)");
    }

    #[test]
    fn free_vars_and_max_order() {
        let e = Expr::time() * Expr::jet(0, 3) + Expr::param("w");
        let vars = e.free_vars();
        assert!(vars.contains(&Var::Time));
        assert!(vars.contains(&Var::Param("w".into())));
        assert_eq!(e.max_jet_order(), Some(3));
    }
}
