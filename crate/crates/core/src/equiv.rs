//! Numeric equality of expressions by seeded random sampling.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{eval, EvalError};
use crate::expr::{Expr, Var};

/// Axis-aligned sampling box. Variables without an explicit range use
/// `default`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    pub default: (f64, f64),
    pub ranges: BTreeMap<Var, (f64, f64)>,
}

impl SampleBox {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        SampleBox { default: (lo, hi), ranges: BTreeMap::new() }
    }

    pub fn with(mut self, v: Var, lo: f64, hi: f64) -> Self {
        self.ranges.insert(v, (lo, hi));
        self
    }

    pub fn range(&self, v: &Var) -> (f64, f64) {
        self.ranges.get(v).copied().unwrap_or(self.default)
    }

    pub fn center(&self, v: &Var) -> f64 {
        let (lo, hi) = self.range(v);
        0.5 * (lo + hi)
    }

    pub(crate) fn draw(&self, v: &Var, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.range(v);
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorstPoint {
    pub point: Vec<(Var, f64)>,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / (1 + max(|lhs|, |rhs|))`.
    pub scaled_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equivalence {
    pub equivalent: bool,
    pub worst: WorstPoint,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EquivalenceError {
    #[error("samples must be >= 1 and tol > 0")]
    InvalidArguments,
    #[error("evaluation failed at sample point {point:?}: {error}")]
    Evaluation { point: Vec<(Var, f64)>, error: EvalError },
}

/// True iff `|e1 - e2| <= tol * (1 + max(|e1|, |e2|))` at every one of
/// `samples` points drawn from `domain` with the given seed.
pub fn equivalent_numeric(
    e1: &Expr,
    e2: &Expr,
    domain: &SampleBox,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<Equivalence, EquivalenceError> {
    if samples == 0 || !(tol > 0.0) {
        return Err(EquivalenceError::InvalidArguments);
    }
    let mut vars = e1.free_vars();
    vars.extend(e2.free_vars());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<WorstPoint> = None;
    let mut equivalent = true;
    for _ in 0..samples {
        let point: Vec<(Var, f64)> = vars.iter().map(|v| (v.clone(), domain.draw(v, &mut rng))).collect();
        let lhs = eval(e1, point.as_slice())
            .map_err(|error| EquivalenceError::Evaluation { point: point.clone(), error })?;
        let rhs = eval(e2, point.as_slice())
            .map_err(|error| EquivalenceError::Evaluation { point: point.clone(), error })?;
        let scaled_error = libm::fabs(lhs - rhs) / (1.0 + libm::fmax(libm::fabs(lhs), libm::fabs(rhs)));
        // NaN never satisfies the comparison.
        if !(scaled_error <= tol) {
            equivalent = false;
        }
        let replace = match &worst {
            None => true,
            Some(w) => scaled_error > w.scaled_error || scaled_error.is_nan(),
        };
        if replace {
            worst = Some(WorstPoint { point, lhs, rhs, scaled_error });
        }
    }
    Ok(Equivalence { equivalent, worst: worst.expect("samples >= 1") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse, ParseContext};

    fn p(text: &str) -> Expr {
        parse(text, &ParseContext::lagrangian(1, 1, &[])).unwrap()
    }

    #[test]
    fn binomial_identity() {
        let r = equivalent_numeric(
            &p("(q0+q1)^2"),
            &p("q0^2 + 2*q0*q1 + q1^2"),
            &SampleBox::uniform(-3.0, 3.0),
            100,
            1e-12,
            42,
        )
        .unwrap();
        assert!(r.equivalent);
    }

    #[test]
    fn inequality_reports_worst_point() {
        let r = equivalent_numeric(&p("q1^2"), &p("q1"), &SampleBox::uniform(2.0, 3.0), 100, 1e-12, 42)
            .unwrap();
        assert!(!r.equivalent);
        let x = r.worst.point[0].1;
        assert!((2.0..3.0).contains(&x));
        assert_eq!(r.worst.lhs, x * x);
        assert!(r.worst.scaled_error > 0.1);
    }

    #[test]
    fn domain_errors_surface() {
        let r = equivalent_numeric(&p("log(q0)"), &p("q0"), &SampleBox::uniform(-1.0, 0.0), 10, 1e-12, 1);
        assert!(matches!(r, Err(EquivalenceError::Evaluation { .. })));
        assert!(equivalent_numeric(&p("q0"), &p("q0"), &SampleBox::uniform(0.0, 1.0), 0, 1e-12, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = equivalent_numeric(&p("q0^3"), &p("q0"), &SampleBox::uniform(-1.0, 1.0), 20, 1e-12, 9).unwrap();
        let b = equivalent_numeric(&p("q0^3"), &p("q0"), &SampleBox::uniform(-1.0, 1.0), 20, 1e-12, 9).unwrap();
        assert_eq!(a, b);
    }
}
