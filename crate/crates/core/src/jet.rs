//! System definitions and jet-coordinate containers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{Expr, Var};
use crate::parse::{is_reserved, parse, ParseContext, ParseError};

/// The user-facing system document.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemSpec {
    pub name: String,
    /// Order `k` of the Lagrangian.
    pub order: usize,
    /// Number of degrees of freedom `n`.
    pub dofs: usize,
    pub lagrangian: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub parameters: BTreeMap<String, f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub autonomous: bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("order must be >= 1")]
    InvalidOrder,
    #[error("dof count must be >= 1")]
    InvalidDofs,
    #[error("parameter name `{0}` is invalid or shadows a reserved identifier")]
    InvalidParameter(String),
    #[error("parameter `{0}` has a non-finite value")]
    NonFiniteParameter(String),
    #[error("lagrangian: {0}")]
    Parse(#[from] ParseError),
    #[error("system is declared autonomous but the lagrangian depends on t")]
    NotAutonomous,
}

/// Validated system: `L(t, q_0..q_k)` with `n` degrees of freedom.
#[derive(Clone, Debug)]
pub struct SystemModel {
    name: String,
    order: usize,
    dofs: usize,
    lagrangian: Expr,
    parameters: BTreeMap<String, f64>,
    autonomous: bool,
}

impl SystemModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    /// The Lagrangian with parameters still symbolic.
    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    pub fn autonomous(&self) -> bool {
        self.autonomous
    }

    /// The Lagrangian with parameter values substituted.
    pub fn bound_lagrangian(&self) -> Expr {
        let params = &self.parameters;
        self.lagrangian.substitute(&|v| match v {
            Var::Param(name) => params.get(name).map(|x| Expr::constant(*x)),
            _ => None,
        })
    }

    /// Context for parsing further expressions over this system's unified
    /// coordinates.
    pub fn unified_context(&self) -> ParseContext {
        ParseContext {
            order: self.order,
            dofs: self.dofs,
            params: self.parameters.keys().cloned().collect(),
            scope: crate::parse::Scope::Unified,
        }
    }
}

fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn build_system(spec: &SystemSpec) -> Result<SystemModel, SystemError> {
    if spec.order == 0 {
        return Err(SystemError::InvalidOrder);
    }
    if spec.dofs == 0 {
        return Err(SystemError::InvalidDofs);
    }
    for (name, value) in &spec.parameters {
        if !valid_identifier(name) || is_reserved(name) {
            return Err(SystemError::InvalidParameter(name.clone()));
        }
        if !value.is_finite() {
            return Err(SystemError::NonFiniteParameter(name.clone()));
        }
    }
    let ctx = ParseContext {
        order: spec.order,
        dofs: spec.dofs,
        params: spec.parameters.keys().cloned().collect(),
        scope: crate::parse::Scope::Lagrangian,
    };
    let lagrangian = parse(&spec.lagrangian, &ctx)?;
    if spec.autonomous && lagrangian.depends_on(&Var::Time) {
        return Err(SystemError::NotAutonomous);
    }
    Ok(SystemModel {
        name: spec.name.clone(),
        order: spec.order,
        dofs: spec.dofs,
        lagrangian,
        parameters: spec.parameters.clone(),
        autonomous: spec.autonomous,
    })
}

/// A point of a jet space: `t` and `q_i^A` for `i < orders`, stored
/// dof-major.
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoint {
    pub t: f64,
    dofs: usize,
    orders: usize,
    values: Vec<f64>,
}

impl JetPoint {
    /// `values` holds `orders` entries per dof, dof-major.
    pub fn new(t: f64, dofs: usize, orders: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dofs * orders, "jet point dimensions");
        JetPoint { t, dofs, orders, values }
    }

    pub fn zeros(t: f64, dofs: usize, orders: usize) -> Self {
        JetPoint::new(t, dofs, orders, vec![0.0; dofs * orders])
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    /// Number of stored orders per dof (`2k` for a point of `J^{2k-1}`).
    pub fn orders(&self) -> usize {
        self.orders
    }

    pub fn q(&self, dof: usize, order: usize) -> f64 {
        self.values[dof * self.orders + order]
    }

    pub fn set(&mut self, dof: usize, order: usize, value: f64) {
        self.values[dof * self.orders + order] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same point restricted or zero-extended to `orders` per dof.
    pub fn with_orders(&self, orders: usize) -> JetPoint {
        let mut out = JetPoint::zeros(self.t, self.dofs, orders);
        for a in 0..self.dofs {
            for i in 0..orders.min(self.orders) {
                out.set(a, i, self.q(a, i));
            }
        }
        out
    }
}

/// A point of `W_r` (or of `W` when `p_ext` is present).
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedPoint {
    pub jet: JetPoint,
    /// `p_A^i`, `k` levels per dof, dof-major.
    pub momenta: Vec<f64>,
    pub p_ext: Option<f64>,
}

impl UnifiedPoint {
    pub fn new(jet: JetPoint, momenta: Vec<f64>, p_ext: Option<f64>) -> Self {
        assert_eq!(jet.orders() % 2, 0, "unified points carry 2k jet orders per dof");
        assert_eq!(momenta.len(), jet.dofs() * jet.orders() / 2, "momenta dimensions");
        UnifiedPoint { jet, momenta, p_ext }
    }

    pub fn order(&self) -> usize {
        self.jet.orders() / 2
    }

    pub fn dofs(&self) -> usize {
        self.jet.dofs()
    }

    pub fn p(&self, dof: usize, level: usize) -> f64 {
        self.momenta[dof * self.order() + level]
    }

    /// Coordinates `(t, q.., p^i..)` of `W_r` in the fixed ordering, dim
    /// `3kn + 1`.
    pub fn coordinates(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.jet.values().len() + self.momenta.len());
        out.push(self.jet.t);
        out.extend_from_slice(self.jet.values());
        out.extend_from_slice(&self.momenta);
        out
    }

    /// Inverse of [`UnifiedPoint::coordinates`]. With `extended`, the slice
    /// is `(t, q.., p, p^i..)` as on `W`.
    pub fn from_coordinates(x: &[f64], dofs: usize, order: usize, extended: bool) -> Option<Self> {
        let nq = 2 * order * dofs;
        let np = order * dofs;
        let want = 1 + nq + np + usize::from(extended);
        if x.len() != want {
            return None;
        }
        let jet = JetPoint::new(x[0], dofs, 2 * order, x[1..1 + nq].to_vec());
        let (p_ext, start) = if extended { (Some(x[1 + nq]), 2 + nq) } else { (None, 1 + nq) };
        Some(UnifiedPoint::new(jet, x[start..].to_vec(), p_ext))
    }
}

/// Polynomial with ascending coefficients `c_0 + c_1 t + ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    /// `d^order/dt^order` at `t`, exact up to floating-point rounding.
    pub fn derivative_at(&self, t: f64, order: usize) -> f64 {
        let c = &self.0;
        if order >= c.len() {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in (order..c.len()).rev() {
            acc = acc * t + c[j] * falling_factorial(j, order);
        }
        acc
    }

    /// Expression `Σ c_j t^j`.
    pub fn to_expr(&self) -> Expr {
        Expr::sum(
            self.0
                .iter()
                .enumerate()
                .map(|(j, c)| Expr::product(vec![Expr::constant(*c), Expr::time().pow(j as f64)]))
                .collect(),
        )
    }
}

/// `j (j-1) ... (j-m+1)`.
pub(crate) fn falling_factorial(j: usize, m: usize) -> f64 {
    (0..m).map(|i| (j - i) as f64).product()
}

/// Jet of the curve `φ^A(t) = coeffs[A](t)` with orders `0..=max_order`.
pub fn jet_of_polynomial(coeffs: &[Polynomial], t: f64, max_order: usize) -> JetPoint {
    let orders = max_order + 1;
    let mut values = Vec::with_capacity(coeffs.len() * orders);
    for poly in coeffs {
        for i in 0..orders {
            values.push(poly.derivative_at(t, i));
        }
    }
    JetPoint::new(t, coeffs.len(), orders, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(order: usize, lagrangian: &str) -> SystemSpec {
        SystemSpec {
            name: "test".into(),
            order,
            dofs: 1,
            lagrangian: lagrangian.into(),
            parameters: BTreeMap::new(),
            autonomous: true,
        }
    }

    #[test]
    fn harmonic_oscillator_builds() {
        let sys = build_system(&spec(1, "0.5*(q1^2 - q0^2)")).unwrap();
        assert!(sys.autonomous());
        assert_eq!(sys.order(), 1);
    }

    #[test]
    fn pais_uhlenbeck_builds() {
        let mut s = spec(2, "0.5*(q2^2 - (w1^2 + w2^2)*q1^2 + w1^2*w2^2*q0^2)");
        s.parameters.insert("w1".into(), 1.0);
        s.parameters.insert("w2".into(), 2.0);
        let sys = build_system(&s).unwrap();
        assert_eq!(sys.lagrangian().max_jet_order(), Some(2));
        assert!(!sys.bound_lagrangian().free_vars().iter().any(|v| matches!(v, Var::Param(_))));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            build_system(&spec(2, "q3^2")),
            Err(SystemError::Parse(ParseError::JetOrderExceeds { .. }))
        ));
        assert!(matches!(
            build_system(&spec(1, "w*q1^2")),
            Err(SystemError::Parse(ParseError::UnknownIdentifier { .. }))
        ));
        assert_eq!(build_system(&spec(1, "t*q1^2")).unwrap_err(), SystemError::NotAutonomous);
        let mut s = spec(1, "q1^2");
        s.parameters.insert("q2".into(), 1.0);
        assert!(matches!(build_system(&s), Err(SystemError::InvalidParameter(_))));
        assert_eq!(build_system(&spec(0, "q0")).unwrap_err(), SystemError::InvalidOrder);
        let mut s = spec(1, "t*q1^2");
        s.autonomous = false;
        assert!(build_system(&s).is_ok());
    }

    #[test]
    fn polynomial_jets() {
        let sq = [Polynomial(vec![0.0, 0.0, 1.0])];
        assert_eq!(jet_of_polynomial(&sq, 1.0, 3).values(), &[1.0, 2.0, 2.0, 0.0]);
        let c = [Polynomial(vec![3.5])];
        assert_eq!(jet_of_polynomial(&c, 7.0, 3).values(), &[3.5, 0.0, 0.0, 0.0]);
        let cube = [Polynomial(vec![0.0, 0.0, 0.0, 1.0])];
        assert_eq!(jet_of_polynomial(&cube, 2.0, 3).values(), &[8.0, 12.0, 12.0, 6.0]);
    }

    #[test]
    fn unified_coordinates_round_trip() {
        let x = [0.5, 1.0, 2.0, 3.0, 4.0, -1.0, -2.0];
        let up = UnifiedPoint::from_coordinates(&x, 1, 2, false).unwrap();
        assert_eq!(up.p(0, 1), -2.0);
        assert_eq!(up.coordinates(), x.to_vec());
        let ext = UnifiedPoint::from_coordinates(&[0.0, 1.0, 0.0, 9.0, 0.5], 1, 1, true).unwrap();
        assert_eq!(ext.p_ext, Some(9.0));
        assert_eq!(ext.momenta, vec![0.5]);
        assert!(UnifiedPoint::from_coordinates(&x[..6], 1, 2, false).is_none());
    }
}
