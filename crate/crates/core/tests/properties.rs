//! Property tests for the symbolic kernel and jet prolongation.

use ostro_core::calculus::total_derivative_n;
use ostro_core::{
    diff, equivalent_numeric, eval, jet_of_polynomial, parse, simplify, total_derivative, Expr,
    ParseContext, Polynomial, SampleBox, Var,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(42), failure_persistence: None, ..Config::default() }
}

// Two dofs, jets up to order 2 so one d_T stays below order 3.
fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(Expr::constant),
        Just(Expr::time()),
        (0usize..2, 0usize..3).prop_map(|(a, i)| Expr::jet(a, i)),
    ]
}

/// Random trees built only from operations that stay finite on `[-1, 1]`.
fn expression() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 32, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            (inner.clone(), 2u32..4).prop_map(|(e, p)| e.pow(p as f64)),
            inner.clone().prop_map(|e| -e),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (1.0 + b.clone() * b)),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.clone().prop_map(|e| e.sin().exp()),
            inner.clone().prop_map(|e| (2.0 + e.cos()).log()),
            inner.clone().prop_map(|e| (1.0 + e.clone() * e).sqrt()),
        ]
    })
}

fn vars() -> Vec<Var> {
    let mut v = vec![Var::Time];
    for a in 0..2 {
        for i in 0..4 {
            v.push(Var::jet(a, i));
        }
    }
    v
}

fn point() -> impl Strategy<Value = Vec<(Var, f64)>> {
    prop::collection::vec(-1.0..1.0f64, 9).prop_map(|x| vars().into_iter().zip(x).collect())
}

fn equivalent(a: &Expr, b: &Expr, tol: f64) -> bool {
    let r = equivalent_numeric(a, b, &SampleBox::uniform(-1.0, 1.0), 20, tol, 7).unwrap();
    r.equivalent
}

proptest! {
    #![proptest_config(config(50))]

    #[test]
    fn derivative_matches_central_difference(e in expression(), at in point(), which in 0usize..7) {
        let v = vars()[which].clone();
        let d = eval(&diff(&e, &v), at.as_slice()).unwrap();
        let shifted = |s: f64| {
            let moved: Vec<(Var, f64)> =
                at.iter().map(|(w, x)| (w.clone(), if *w == v { x + s } else { *x })).collect();
            eval(&e, moved.as_slice()).unwrap()
        };
        let h = 1e-6;
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()), "d = {d}, fd = {fd}, e = {e}");
    }

    #[test]
    fn partial_and_total_derivative_commute(e in expression(), a in 0usize..2, i in 1usize..4) {
        let qi = Var::jet(a, i);
        let lhs = diff(&total_derivative(&e, 3).unwrap(), &qi);
        let swapped = total_derivative(&diff(&e, &qi), 3).unwrap();
        let lower = diff(&e, &Var::jet(a, i - 1));
        let defect = lhs - swapped - lower;
        prop_assert!(equivalent(&defect, &Expr::zero(), 1e-10), "e = {e}");
    }

    #[test]
    fn simplify_preserves_value(e in expression()) {
        prop_assert!(equivalent(&e, &simplify(&e), 1e-10), "e = {e}");
    }

    #[test]
    fn print_parse_round_trip(e in expression()) {
        let text = e.display(2).to_string();
        let back = parse(&text, &ParseContext::unified(1, 2, &[])).unwrap();
        prop_assert!(equivalent(&e, &back, 1e-12), "printed {text}");
    }
}

proptest! {
    #![proptest_config(config(20))]

    #[test]
    fn polynomial_jet_matches_repeated_total_derivative(
        coeffs in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 1..7), 1..3),
        t in -1.5..1.5f64,
    ) {
        let polys: Vec<Polynomial> = coeffs.into_iter().map(Polynomial).collect();
        let jet = jet_of_polynomial(&polys, t, 5);
        for (a, poly) in polys.iter().enumerate() {
            for i in 0..=5 {
                let symbolic = total_derivative_n(&poly.to_expr(), i, 6).unwrap();
                let value = eval(&symbolic, [(Var::Time, t)].as_slice()).unwrap();
                let q = jet.q(a, i);
                prop_assert!((q - value).abs() <= 1e-12 * (1.0 + value.abs()), "order {i}: {q} vs {value}");
            }
        }
    }
}
