//! Terminating rewrite pass: constant folding, 0/1 identities, flattening,
//! like-term and like-factor collection, and distribution of a numeric
//! coefficient over a single sum.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::eval::{apply, integer_exponent};
use crate::expr::{Expr, Node, Var};

/// Returns a numerically equivalent, usually smaller tree.
pub fn simplify(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(_) | Node::Var(_) => e.clone(),
        Node::Neg(x) => product(alloc::vec![Expr::constant(-1.0), simplify(x)]),
        Node::Sum(xs) => sum(xs.iter().map(simplify).collect()),
        Node::Product(xs) => product(xs.iter().map(simplify).collect()),
        Node::Div(a, b) => quotient(simplify(a), simplify(b)),
        Node::Pow(b, ex) => pow(simplify(b), *ex),
        Node::Func(f, x) => {
            let x = simplify(x);
            if let Some(c) = x.as_const() {
                if let Ok(v) = apply(*f, c) {
                    if v.is_finite() {
                        return Expr::constant(v);
                    }
                }
            }
            Expr::apply(*f, x)
        }
    }
}

fn quotient(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        return Expr::zero();
    }
    match b.as_const() {
        Some(c) if c != 0.0 => product(alloc::vec![Expr::constant(1.0 / c), a]),
        _ => Expr::new(Node::Div(a, b)),
    }
}

fn pow(base: Expr, ex: f64) -> Expr {
    if ex == 0.0 {
        return Expr::one();
    }
    if ex == 1.0 {
        return base;
    }
    if let Some(c) = base.as_const() {
        let v = libm::pow(c, ex);
        if v.is_finite() && !(c < 0.0 && integer_exponent(ex).is_none()) && !(c == 0.0 && ex < 0.0) {
            return Expr::constant(v);
        }
    }
    if integer_exponent(ex).is_some() {
        match base.node() {
            Node::Pow(inner, e2) if integer_exponent(*e2).is_some() => {
                return pow(inner.clone(), e2 * ex);
            }
            Node::Product(fs) => {
                return product(fs.iter().map(|f| pow(f.clone(), ex)).collect());
            }
            _ => {}
        }
    }
    Expr::new(Node::Pow(base, ex))
}

// Splits a simplified term into its numeric coefficient and the remaining
// factors.
fn split_coefficient(e: &Expr) -> (f64, Vec<Expr>) {
    match e.node() {
        Node::Const(c) => (*c, Vec::new()),
        Node::Product(fs) => {
            let mut coef = 1.0;
            let mut rest = Vec::new();
            for f in fs {
                match f.as_const() {
                    Some(c) => coef *= c,
                    None => rest.push(f.clone()),
                }
            }
            (coef, rest)
        }
        _ => (1.0, alloc::vec![e.clone()]),
    }
}

fn rebuild_product(coef: f64, mut rest: Vec<Expr>) -> Expr {
    if coef == 0.0 {
        return Expr::zero();
    }
    if coef != 1.0 || rest.is_empty() {
        rest.insert(0, Expr::constant(coef));
    }
    if rest.len() == 1 {
        rest.pop().unwrap()
    } else {
        Expr::new(Node::Product(rest))
    }
}

fn sum(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::new();
    for t in terms {
        match t.node() {
            Node::Sum(xs) => flat.extend(xs.iter().cloned()),
            _ => flat.push(t),
        }
    }
    let mut constant = 0.0;
    let mut groups: Vec<(Vec<Expr>, f64)> = Vec::new();
    for t in &flat {
        let (coef, rest) = split_coefficient(t);
        if rest.is_empty() {
            constant += coef;
            continue;
        }
        match groups.iter_mut().find(|(r, _)| slices_equal(r, &rest)) {
            Some((_, c)) => *c += coef,
            None => groups.push((rest, coef)),
        }
    }
    let mut keyed: Vec<(usize, Expr)> = groups
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(rest, c)| {
            let key = rest.iter().filter_map(Expr::max_jet_order).max().unwrap_or(0);
            (key, rebuild_product(c, rest))
        })
        .collect();
    // Highest jet order first, then structural order.
    keyed.sort_by(|(ka, a), (kb, b)| kb.cmp(ka).then_with(|| a.cmp_structural(b)));
    let mut out: Vec<Expr> = keyed.into_iter().map(|(_, e)| e).collect();
    if constant != 0.0 {
        out.push(Expr::constant(constant));
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::new(Node::Sum(out)),
    }
}

fn slices_equal(a: &[Expr], b: &[Expr]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

fn product(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::new();
    for f in factors {
        match f.node() {
            Node::Product(xs) => flat.extend(xs.iter().cloned()),
            _ => flat.push(f),
        }
    }
    let mut coef = 1.0;
    // (base, integer exponent) pairs combine; other factors stay as they are.
    let mut powers: Vec<(Expr, f64)> = Vec::new();
    let mut others: Vec<Expr> = Vec::new();
    for f in flat {
        if let Some(c) = f.as_const() {
            coef *= c;
            continue;
        }
        let (base, ex) = match f.node() {
            Node::Pow(b, ex) => (b.clone(), *ex),
            _ => (f.clone(), 1.0),
        };
        if integer_exponent(ex).is_none() {
            others.push(f);
            continue;
        }
        match powers.iter_mut().find(|(b, _)| *b == base) {
            Some((_, e)) => *e += ex,
            None => powers.push((base, ex)),
        }
    }
    if coef == 0.0 {
        return Expr::zero();
    }
    let mut rest: Vec<Expr> = powers
        .into_iter()
        .filter(|(_, ex)| *ex != 0.0)
        .map(|(b, ex)| pow(b, ex))
        .collect();
    rest.extend(others);
    // `pow` may have produced constants or products again.
    let mut again = Vec::new();
    for f in rest {
        match f.node() {
            Node::Const(c) => coef *= c,
            Node::Product(xs) => {
                for x in xs {
                    match x.as_const() {
                        Some(c) => coef *= c,
                        None => again.push(x.clone()),
                    }
                }
            }
            _ => again.push(f),
        }
    }
    let mut rest = again;
    if rest.len() == 1 && coef != 1.0 {
        if let Node::Sum(terms) = rest[0].node() {
            return sum(
                terms
                    .iter()
                    .map(|t| {
                        let (c, r) = split_coefficient(t);
                        rebuild_product(c * coef, r)
                    })
                    .collect(),
            );
        }
    }
    rest.sort_by(factor_order);
    rebuild_product(coef, rest)
}

// Variables ordered by dof then order keeps `q0*q1` style output.
fn factor_order(a: &Expr, b: &Expr) -> Ordering {
    match (a.node(), b.node()) {
        (Node::Var(x), Node::Var(y)) => var_rank(x).cmp(&var_rank(y)),
        _ => a.cmp_structural(b),
    }
}

fn var_rank(v: &Var) -> (u8, usize, usize) {
    match v {
        Var::Param(_) => (0, 0, 0),
        Var::Time => (1, 0, 0),
        Var::Jet { dof, order } => (2, *dof, *order),
        Var::Momentum { dof, level } => (3, *dof, *level),
        Var::ExtMomentum => (4, 0, 0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::total_derivative;
    use crate::equiv::{equivalent_numeric, SampleBox};
    use crate::parse::{parse, ParseContext};
    use alloc::string::ToString;

    fn p(text: &str) -> Expr {
        parse(text, &ParseContext::unified(2, 1, &[])).unwrap()
    }

    #[test]
    fn zero_times_term_vanishes() {
        assert_eq!(simplify(&p("0*q1 + q0")), p("q0"));
    }

    #[test]
    fn like_terms_collect() {
        let s = simplify(&p("q1 + q1"));
        assert_eq!(s, Expr::product(alloc::vec![Expr::constant(2.0), Expr::jet(0, 1)]));
        assert_eq!(s.display(1).to_string(), "2*q1");
    }

    #[test]
    fn total_derivative_of_square_is_single_term() {
        let s = simplify(&total_derivative(&p("q0^2"), 3).unwrap());
        assert_eq!(s.display(1).to_string(), "2*q0*q1");
    }

    #[test]
    fn constants_fold_and_powers_merge() {
        assert_eq!(simplify(&p("2*3 + sin(0)")), Expr::constant(6.0));
        assert_eq!(simplify(&p("q0*q0^2")).display(1).to_string(), "q0^3");
        assert_eq!(simplify(&p("(q0^2)^3")).display(1).to_string(), "q0^6");
        assert_eq!(simplify(&p("q0/2")).display(1).to_string(), "0.5*q0");
        assert_eq!(simplify(&p("q0^1 + 0")), p("q0"));
        assert!(simplify(&p("q0 - q0")).is_const(0.0));
    }

    #[test]
    fn coefficient_distributes_over_a_sum() {
        let s = simplify(&p("0.5*(q2^2 - 5*q1^2 + 4*q0^2)"));
        assert_eq!(s.display(1).to_string(), "0.5*q2^2 - 2.5*q1^2 + 2*q0^2");
    }

    #[test]
    fn domain_errors_are_not_folded_away() {
        let s = simplify(&p("log(0 - 1) + q0"));
        assert!(s.free_vars().len() == 1);
        assert!(matches!(s.node(), Node::Sum(_)));
        let s = simplify(&p("q0/0"));
        assert!(matches!(s.node(), Node::Div(..)));
    }

    #[test]
    fn preserves_value_on_mixed_corpus() {
        let corpus = [
            "(q0+q1)^2 - q0*(q1 - 3)",
            "-(q0 - 2*q1)*(q1 + q0)/3",
            "exp(q0)*exp(q0) + 2*exp(q0)^2",
            "sqrt(q1^2 + 1)*sqrt(q1^2 + 1) - q1*q1",
            "t*(q0 + t) - -q1*2",
            "sin(q0)^2 + cos(q0)^2 + q0^(-2)*q0^3",
        ];
        for text in corpus {
            let e = p(text);
            let r = equivalent_numeric(&e, &simplify(&e), &SampleBox::uniform(0.5, 2.0), 100, 1e-12, 3)
                .unwrap();
            assert!(r.equivalent, "{text}");
        }
    }
}
