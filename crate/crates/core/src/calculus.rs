//! Partial derivatives and the total time derivative
//! `d_T = ∂/∂t + Σ q_{i+1}^A ∂/∂q_i^A`.

use alloc::vec::Vec;

use crate::expr::{Expr, Func, Node, Var};
use crate::simplify::simplify;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CalculusError {
    #[error("total derivative would need jet order {needed}, maximum is {max}")]
    OrderOverflow { needed: usize, max: usize },
}

/// Exact partial derivative of `e` with respect to `v`.
pub fn diff(e: &Expr, v: &Var) -> Expr {
    d(e, v).unwrap_or_else(Expr::zero)
}

// `None` stands for an identically zero derivative.
fn d(e: &Expr, v: &Var) -> Option<Expr> {
    match e.node() {
        Node::Const(_) => None,
        Node::Var(u) => (u == v).then(Expr::one),
        Node::Sum(xs) => {
            let terms: Vec<Expr> = xs.iter().filter_map(|x| d(x, v)).collect();
            (!terms.is_empty()).then(|| Expr::sum(terms))
        }
        Node::Product(xs) => {
            let mut terms = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                if let Some(dx) = d(x, v) {
                    let mut factors: Vec<Expr> = xs.clone();
                    factors[i] = dx;
                    terms.push(Expr::product(factors));
                }
            }
            (!terms.is_empty()).then(|| Expr::sum(terms))
        }
        Node::Pow(b, ex) => {
            let db = d(b, v)?;
            if *ex == 0.0 {
                return None;
            }
            Some(Expr::product(alloc::vec![Expr::constant(*ex), b.clone().pow(ex - 1.0), db]))
        }
        Node::Neg(x) => d(x, v).map(|dx| -dx),
        Node::Div(a, b) => match (d(a, v), d(b, v)) {
            (None, None) => None,
            (Some(da), None) => Some(Expr::new(Node::Div(da, b.clone()))),
            (da, Some(db)) => {
                // (a' b - a b') / b^2
                let mut num = Vec::new();
                if let Some(da) = da {
                    num.push(Expr::product(alloc::vec![da, b.clone()]));
                }
                num.push(-Expr::product(alloc::vec![a.clone(), db]));
                Some(Expr::new(Node::Div(Expr::sum(num), b.clone().pow(2.0))))
            }
        },
        Node::Func(f, x) => {
            let dx = d(x, v)?;
            let outer = match f {
                Func::Sin => x.clone().cos(),
                Func::Cos => -x.clone().sin(),
                Func::Exp => e.clone(),
                Func::Log => Expr::new(Node::Div(Expr::one(), x.clone())),
                Func::Sqrt => Expr::new(Node::Div(Expr::constant(0.5), e.clone())),
            };
            Some(Expr::product(alloc::vec![outer, dx]))
        }
    }
}

/// Total time derivative of `e`, simplified. Momenta and parameters are
/// constants under `d_T`.
///
/// Fails if a jet variable of order `max_order` occurs, since its successor
/// would leave the ambient jet space.
pub fn total_derivative(e: &Expr, max_order: usize) -> Result<Expr, CalculusError> {
    let mut terms = Vec::new();
    for v in e.free_vars() {
        match v {
            Var::Time => terms.push(diff(e, &v)),
            Var::Jet { dof, order } => {
                if order + 1 > max_order {
                    return Err(CalculusError::OrderOverflow { needed: order + 1, max: max_order });
                }
                terms.push(Expr::product(alloc::vec![Expr::jet(dof, order + 1), diff(e, &v)]));
            }
            _ => {}
        }
    }
    Ok(simplify(&Expr::sum(terms)))
}

/// `d_T` applied `times` times.
pub fn total_derivative_n(e: &Expr, times: usize, max_order: usize) -> Result<Expr, CalculusError> {
    let mut out = e.clone();
    for _ in 0..times {
        out = total_derivative(&out, max_order)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::{equivalent_numeric, SampleBox};
    use crate::parse::{parse, ParseContext};

    fn p(text: &str) -> Expr {
        parse(text, &ParseContext::unified(3, 1, &[])).unwrap()
    }

    fn same(a: &Expr, b: &Expr) -> bool {
        equivalent_numeric(a, b, &SampleBox::uniform(-2.0, 2.0), 50, 1e-12, 7).unwrap().equivalent
    }

    #[test]
    fn power_rule() {
        assert_eq!(simplify(&diff(&p("0.5*q1^2"), &Var::jet(0, 1))), p("q1"));
    }

    #[test]
    fn product_and_constant_rules() {
        assert_eq!(simplify(&diff(&p("q0*q1 + sin(t)"), &Var::jet(0, 0))), p("q1"));
    }

    #[test]
    fn pais_uhlenbeck_top_partial() {
        let l = p("0.5*(q2^2 - 5*q1^2 + 4*q0^2)");
        assert!(same(&diff(&l, &Var::jet(0, 2)), &p("q2")));
        assert!(same(&diff(&l, &Var::jet(0, 1)), &p("-5*q1")));
    }

    #[test]
    fn chain_rules_for_functions() {
        let e = p("log(q0)*sqrt(q1) + exp(q0*q1)/q1");
        let box_ = SampleBox::uniform(0.5, 2.0);
        let d0 = diff(&e, &Var::jet(0, 0));
        let oracle = p("sqrt(q1)/q0 + exp(q0*q1)");
        assert!(equivalent_numeric(&d0, &oracle, &box_, 50, 1e-12, 1).unwrap().equivalent);
        let d1 = diff(&e, &Var::jet(0, 1));
        let oracle = p("log(q0)*0.5/sqrt(q1) + (q0*exp(q0*q1)*q1 - exp(q0*q1))/q1^2");
        assert!(equivalent_numeric(&d1, &oracle, &box_, 50, 1e-12, 1).unwrap().equivalent);
    }

    #[test]
    fn total_derivative_examples() {
        assert_eq!(total_derivative(&p("q0"), 3).unwrap(), p("q1"));
        assert!(same(&total_derivative(&p("t*q1"), 3).unwrap(), &p("q1 + t*q2")));
        let dd = total_derivative_n(&p("q0^2"), 2, 3).unwrap();
        assert!(same(&dd, &p("2*q1^2 + 2*q0*q2")));
    }

    #[test]
    fn momenta_are_constant_under_total_derivative() {
        let e = p("p0*q1");
        assert!(same(&total_derivative(&e, 3).unwrap(), &p("p0*q2")));
    }

    #[test]
    fn total_derivative_overflow() {
        assert_eq!(
            total_derivative(&p("q3"), 3),
            Err(CalculusError::OrderOverflow { needed: 4, max: 3 })
        );
    }
}
