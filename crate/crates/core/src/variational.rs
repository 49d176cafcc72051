//! Discretized action functionals and finite-difference stationarity tests.
//!
//! Paths are analytic (monomial or Fourier expansions, optionally
//! multiplied by a polynomial envelope), so their prolongations to any jet
//! order are exact. Variations are polynomial bumps
//! `v(t) = a (1 - ((t - c)/w)^2)^m` on `[c - w, c + w]` with `m = k + 1`,
//! which vanish with their first `k` derivatives at the support ends. The
//! difference of two actions that differ only by a variation is integrated
//! over the support alone.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Trajectory;
use crate::eval::EvalError;
use crate::jet::{falling_factorial, Polynomial};
use crate::legendre::DerivedSystem;
use crate::linalg::{lstsq_qr, Lu, Matrix};

/// A curve `t ↦ φ^A(t)` with analytic derivatives of every order.
pub trait Curve {
    fn dofs(&self) -> usize;
    fn interval(&self) -> (f64, f64);
    /// `d^order φ^dof / dt^order` at `t`.
    fn derivative(&self, dof: usize, order: usize, t: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum Basis {
    /// `1, t, t^2, ...`
    Monomial,
    /// `1, cos ωt, sin ωt, cos 2ωt, sin 2ωt, ...`
    Fourier { omega: f64 },
}

impl Basis {
    /// `d^order/dt^order` of the `j`-th basis function at `t`.
    pub fn derivative(&self, j: usize, order: usize, t: f64) -> f64 {
        match self {
            Basis::Monomial => {
                if order > j {
                    0.0
                } else {
                    falling_factorial(j, order) * libm::pow(t, (j - order) as f64)
                }
            }
            Basis::Fourier { omega } => {
                if j == 0 {
                    return if order == 0 { 1.0 } else { 0.0 };
                }
                let h = j.div_ceil(2) as f64 * omega;
                // cos is sin shifted by a quarter period; each derivative adds one more.
                let phase = (order + usize::from(j % 2 == 1)) % 4;
                let x = h * t;
                let scale = libm::pow(h, order as f64);
                scale
                    * match phase {
                        0 => libm::sin(x),
                        1 => libm::cos(x),
                        2 => -libm::sin(x),
                        _ => -libm::cos(x),
                    }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathRepresentation {
    pub basis: Basis,
    /// One coefficient vector per dof.
    pub coefficients: Vec<Vec<f64>>,
    pub interval: (f64, f64),
}

impl PathRepresentation {
    pub fn new(basis: Basis, coefficients: Vec<Vec<f64>>, interval: (f64, f64)) -> Self {
        assert!(interval.1 > interval.0, "empty interval");
        PathRepresentation { basis, coefficients, interval }
    }
}

impl Curve for PathRepresentation {
    fn dofs(&self) -> usize {
        self.coefficients.len()
    }

    fn interval(&self) -> (f64, f64) {
        self.interval
    }

    fn derivative(&self, dof: usize, order: usize, t: f64) -> f64 {
        self.coefficients[dof].iter().enumerate().map(|(j, c)| c * self.basis.derivative(j, order, t)).sum()
    }
}

/// `envelope(t) · path(t)`, differentiated by the Leibniz rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulatedPath {
    pub envelope: Polynomial,
    pub path: PathRepresentation,
}

impl Curve for ModulatedPath {
    fn dofs(&self) -> usize {
        self.path.dofs()
    }

    fn interval(&self) -> (f64, f64) {
        self.path.interval
    }

    fn derivative(&self, dof: usize, order: usize, t: f64) -> f64 {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=order {
            acc += binom * self.envelope.derivative_at(t, j) * self.path.derivative(dof, order - j, t);
            binom = binom * (order - j) as f64 / (j + 1) as f64;
        }
        acc
    }
}

/// Bump `amplitude (1 - ((t - center)/half_width)^2)^m` on dof `dof`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Variation {
    pub center: f64,
    pub half_width: f64,
    pub m: usize,
    pub dof: usize,
    pub amplitude: f64,
}

impl Variation {
    /// Admissible variation for an order-`k` system: `m = k + 1`.
    pub fn new(order: usize, dof: usize, center: f64, half_width: f64, amplitude: f64) -> Self {
        assert!(half_width > 0.0);
        Variation { center, half_width, m: order + 1, dof, amplitude }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    /// `d^order v / dt^order` at `t` (zero outside the support).
    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        let u = (t - self.center) / self.half_width;
        if !(u.abs() < 1.0) {
            return 0.0;
        }
        // (1 - u^2)^m = Σ_j C(m, j) (-1)^j u^{2j}
        let mut binom = 1.0;
        let mut acc = 0.0;
        for j in 0..=self.m {
            let p = 2 * j;
            if p >= order {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binom * falling_factorial(p, order) * libm::pow(u, (p - order) as f64);
            }
            binom = binom * (self.m - j) as f64 / (j + 1) as f64;
        }
        self.amplitude * acc / libm::pow(self.half_width, order as f64)
    }
}

struct Perturbed<'a> {
    base: &'a dyn Curve,
    variation: &'a Variation,
    eps: f64,
}

impl Curve for Perturbed<'_> {
    fn dofs(&self) -> usize {
        self.base.dofs()
    }

    fn interval(&self) -> (f64, f64) {
        self.base.interval()
    }

    fn derivative(&self, dof: usize, order: usize, t: f64) -> f64 {
        let v = if dof == self.variation.dof { self.eps * self.variation.derivative(order, t) } else { 0.0 };
        self.base.derivative(dof, order, t) + v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Integrand {
    /// `L(j^k φ)`.
    Lagrangian,
    /// Pullback of the Cartan form along the unified lift
    /// `ψ = (j^{2k-1} φ, FL(j^{2k-1} φ), p)` with `p` from the Hamiltonian
    /// section: `p + Σ p^i d(q_i)/dt`.
    Cartan,
}

fn load_curve(ds: &DerivedSystem, frame: &mut [f64], curve: &dyn Curve, t: f64, orders: usize) {
    frame[0] = t;
    for a in 0..ds.dofs() {
        for i in 0..orders {
            ds.set_jet(frame, a, i, curve.derivative(a, i, t));
        }
    }
}

fn integrand_at(
    ds: &DerivedSystem,
    frame: &mut [f64],
    curve: &dyn Curve,
    integrand: Integrand,
    t: f64,
) -> Result<f64, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    match integrand {
        Integrand::Lagrangian => {
            load_curve(ds, frame, curve, t, k + 1);
            ds.eval_lagrangian(frame)
        }
        Integrand::Cartan => {
            load_curve(ds, frame, curve, t, 2 * k);
            let p = ds.eval_momenta(frame)?;
            ds.load_momenta(frame, &p);
            let p_ext = -ds.eval_h_hat(frame)?;
            let mut acc = p_ext;
            for a in 0..n {
                for i in 0..k {
                    acc += p[a * k + i] * curve.derivative(a, i + 1, t);
                }
            }
            Ok(acc)
        }
    }
}

/// Composite Simpson rule for `f` on `[lo, hi]` with `intervals` rounded up
/// to an even number.
pub fn simpson<E>(mut f: impl FnMut(f64) -> Result<f64, E>, lo: f64, hi: f64, intervals: usize) -> Result<f64, E> {
    let m = (intervals.max(2) + 1) & !1;
    let h = (hi - lo) / m as f64;
    let mut acc = f(lo)? + f(hi)?;
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h)?;
    }
    Ok(acc * h / 3.0)
}

fn action_on(
    ds: &DerivedSystem,
    curve: &dyn Curve,
    integrand: Integrand,
    lo: f64,
    hi: f64,
    quad_points: usize,
) -> Result<f64, EvalError> {
    let mut frame = ds.new_frame();
    simpson(|t| integrand_at(ds, &mut frame, curve, integrand, t), lo, hi, quad_points)
}

/// `∫ integrand dt` over the curve's interval by composite Simpson with
/// `quad_points` subintervals (rounded up to even, at least 2).
pub fn discrete_action(
    ds: &DerivedSystem,
    curve: &dyn Curve,
    integrand: Integrand,
    quad_points: usize,
) -> Result<f64, EvalError> {
    let (a, b) = curve.interval();
    action_on(ds, curve, integrand, a, b, quad_points)
}

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Central difference `(S(φ + εv) - S(φ - εv)) / 2ε` of the Lagrangian
/// action, integrated over the support of `v`. When the forward and
/// backward one-sided differences disagree by more than 10% the result is
/// refined by Richardson extrapolation with `ε/2`.
pub fn action_derivative(
    ds: &DerivedSystem,
    curve: &dyn Curve,
    variation: &Variation,
    epsilon: f64,
    quad_points: usize,
) -> Result<f64, EvalError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (lo, hi) = variation.support();
    let s = |eps: f64| {
        let p = Perturbed { base: curve, variation, eps };
        action_on(ds, &p, Integrand::Lagrangian, lo, hi, quad_points)
    };
    let (s0, sp, sm) = (s(0.0)?, s(epsilon)?, s(-epsilon)?);
    let central = (sp - sm) / (2.0 * epsilon);
    let forward = (sp - s0) / epsilon;
    let backward = (s0 - sm) / epsilon;
    if libm::fabs(forward - backward) <= 0.1 * libm::fmax(libm::fabs(forward), libm::fabs(backward)) {
        return Ok(central);
    }
    let half = 0.5 * epsilon;
    let central_half = (s(half)? - s(-half)?) / (2.0 * half);
    Ok((4.0 * central_half - central) / 3.0)
}

/// `δS = ∫ EL_A v dt` over the support of `v`, with `EL` the Euler–Lagrange
/// expression evaluated on the analytic prolongation of the curve.
pub fn first_variation(
    ds: &DerivedSystem,
    curve: &dyn Curve,
    variation: &Variation,
    quad_points: usize,
) -> Result<f64, EvalError> {
    let (lo, hi) = variation.support();
    let mut frame = ds.new_frame();
    simpson(
        |t| {
            load_curve(ds, &mut frame, curve, t, 2 * ds.order() + 1);
            Ok(ds.eval_el(&frame)?[variation.dof] * variation.derivative(0, t))
        },
        lo,
        hi,
        quad_points,
    )
}

/// Seeded admissible variations with support strictly inside
/// `interval`: half-widths in `[0.05, 0.25]` of its length, unit amplitude.
pub fn draw_variations(interval: (f64, f64), dofs: usize, order: usize, count: usize, seed: u64) -> Vec<Variation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = interval;
    let len = b - a;
    (0..count)
        .map(|_| {
            let w = len * rng.gen_range(0.05..0.25);
            let margin = 1e-3 * len;
            let center = rng.gen_range(a + w + margin..b - w - margin);
            let dof = rng.gen_range(0..dofs);
            Variation::new(order, dof, center, w, 1.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StationarityReport {
    pub pass: bool,
    pub max_abs_ds: f64,
    pub worst: Variation,
    /// Lagrangian action of the unperturbed path.
    pub action: f64,
    pub tol: f64,
    pub derivatives: Vec<f64>,
}

/// Assembles a report from precomputed action derivatives: passes iff
/// `max|dS| <= tol (1 + |S|)`.
pub fn summarize_stationarity(action: f64, variations: &[Variation], derivatives: Vec<f64>, tol: f64) -> StationarityReport {
    let (mut worst, mut max_abs_ds) = (0, 0.0);
    for (i, d) in derivatives.iter().enumerate() {
        if !(libm::fabs(*d) <= max_abs_ds) {
            worst = i;
            max_abs_ds = libm::fabs(*d);
        }
    }
    StationarityReport {
        pass: max_abs_ds <= tol * (1.0 + libm::fabs(action)),
        max_abs_ds,
        worst: variations[worst],
        action,
        tol,
        derivatives,
    }
}

pub const DEFAULT_QUAD_POINTS: usize = 2000;

/// Draws `n_variations` seeded bumps and tests `max|dS| <= tol (1 + |S|)`.
pub fn stationarity_check(
    ds: &DerivedSystem,
    curve: &dyn Curve,
    n_variations: usize,
    tol: f64,
    seed: u64,
) -> Result<StationarityReport, EvalError> {
    assert!(n_variations >= 1, "at least one variation");
    let action = discrete_action(ds, curve, Integrand::Lagrangian, DEFAULT_QUAD_POINTS)?;
    let variations = draw_variations(curve.interval(), curve.dofs(), ds.order(), n_variations, seed);
    let derivatives = variations
        .iter()
        .map(|v| action_derivative(ds, curve, v, DEFAULT_EPSILON, DEFAULT_QUAD_POINTS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize_stationarity(action, &variations, derivatives, tol))
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("{coeffs} coefficients need at least as many grid points, got {points}")]
    TooFewPoints { points: usize, coeffs: usize },
    #[error("least-squares system is rank deficient")]
    RankDeficient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub path: PathRepresentation,
    /// Max `|φ(t) - q_0(t)|` over the grid.
    pub q0_residual: f64,
    /// Max `|φ^{(i)}(t) - q_i(t)|` for `i = 1..2k-1`.
    pub derivative_residuals: Vec<f64>,
    /// The normal equations were too ill-conditioned and the fit fell back
    /// to Householder QR.
    pub used_qr: bool,
}

/// Condition estimate above which the normal equations are abandoned.
pub const FIT_CONDITION_LIMIT: f64 = 1e12;

/// Least-squares fit of each dof's `q_0` samples in `basis`.
pub fn fit_path(traj: &Trajectory, basis: Basis, n_coeffs: usize) -> Result<FitResult, FitError> {
    let points = traj.len();
    if n_coeffs == 0 || n_coeffs > points {
        return Err(FitError::TooFewPoints { points, coeffs: n_coeffs });
    }
    let layout = traj.layout();
    let (n, k) = (layout.dofs(), layout.order());
    let grid = traj.grid();
    let mut design = Matrix::zeros(points, n_coeffs);
    for (r, t) in grid.iter().enumerate() {
        for j in 0..n_coeffs {
            design[(r, j)] = basis.derivative(j, 0, *t);
        }
    }
    let dt = design.transpose();
    let normal = dt.mul(&design);
    let lu = Lu::new(&normal);
    let use_qr = lu.is_singular() || lu.condition_1() > FIT_CONDITION_LIMIT;
    if use_qr {
        log::warn!("normal equations ill-conditioned; fitting by QR");
    }
    let mut coefficients = Vec::with_capacity(n);
    for a in 0..n {
        let y = traj.series(a, 0);
        let c = if use_qr { lstsq_qr(&design, &y) } else { lu.solve(&dt.mul_vec(&y)) };
        coefficients.push(c.ok_or(FitError::RankDeficient)?);
    }
    let path = PathRepresentation::new(basis, coefficients, (grid[0], grid[points - 1]));
    let mut residuals = vec![0.0f64; 2 * k];
    for a in 0..n {
        for (i, res) in residuals.iter_mut().enumerate() {
            for (t, q) in grid.iter().zip(traj.series(a, i)) {
                *res = res.max(libm::fabs(path.derivative(a, i, *t) - q));
            }
        }
    }
    Ok(FitResult { path, q0_residual: residuals[0], derivative_residuals: residuals[1..].to_vec(), used_qr: use_qr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StateLayout;
    use crate::jet::{build_system, SystemSpec};
    use alloc::collections::BTreeMap;
    use core::f64::consts::PI;

    fn derived(order: usize, lagrangian: &str) -> DerivedSystem {
        DerivedSystem::new(
            &build_system(&SystemSpec {
                name: "t".into(),
                order,
                dofs: 1,
                lagrangian: lagrangian.into(),
                parameters: BTreeMap::new(),
                autonomous: true,
            })
            .unwrap(),
        )
    }

    fn pu() -> DerivedSystem {
        derived(2, "0.5*(q2^2 - 5*q1^2 + 4*q0^2)")
    }

    fn cos_path(b: f64) -> PathRepresentation {
        PathRepresentation::new(Basis::Fourier { omega: 1.0 }, vec![vec![0.0, 1.0]], (0.0, b))
    }

    #[test]
    fn basis_derivatives() {
        let f = Basis::Fourier { omega: 2.0 };
        let t = 0.3;
        assert_eq!(f.derivative(1, 0, t), libm::cos(0.6));
        assert_eq!(f.derivative(2, 0, t), libm::sin(0.6));
        assert!((f.derivative(1, 1, t) + 2.0 * libm::sin(0.6)).abs() < 1e-15);
        assert!((f.derivative(4, 3, t) + 64.0 * libm::cos(1.2)).abs() < 1e-12);
        assert_eq!(Basis::Monomial.derivative(3, 2, 2.0), 12.0);
        assert_eq!(Basis::Monomial.derivative(1, 2, 2.0), 0.0);
    }

    #[test]
    fn bump_vanishes_to_order_k_at_support_ends() {
        let v = Variation::new(2, 0, 1.0, 0.5, 1.0);
        assert_eq!(v.derivative(0, 1.0), 1.0);
        for order in 0..=2 {
            assert!(v.derivative(order, 0.5 + 1e-9).abs() < 1e-6);
            assert_eq!(v.derivative(order, 0.4), 0.0);
        }
        // Analytic first derivative of (1 - u^2)^3 at u = 0.5.
        let d = v.derivative(1, 1.25);
        assert!((d - 3.0 * 0.75f64.powi(2) * (-2.0 * 0.5) / 0.5).abs() < 1e-12);
    }

    #[test]
    fn action_examples() {
        let free = derived(1, "0.5*q1^2");
        let line = PathRepresentation::new(Basis::Monomial, vec![vec![0.0, 1.0]], (0.0, 1.0));
        assert!((discrete_action(&free, &line, Integrand::Lagrangian, 10).unwrap() - 0.5).abs() < 1e-15);
        let ho = derived(1, "0.5*(q1^2 - q0^2)");
        assert!(discrete_action(&ho, &cos_path(PI), Integrand::Lagrangian, 200).unwrap().abs() < 1e-12);
        let s_l = discrete_action(&pu(), &cos_path(2.0), Integrand::Lagrangian, 200).unwrap();
        let s_c = discrete_action(&pu(), &cos_path(2.0), Integrand::Cartan, 200).unwrap();
        assert!((s_l - s_c).abs() <= 1e-12 * (1.0 + s_l.abs()));
    }

    #[test]
    fn action_derivative_examples() {
        let free = derived(1, "0.5*q1^2");
        let line = PathRepresentation::new(Basis::Monomial, vec![vec![0.0, 1.0]], (0.0, 1.0));
        let v = Variation::new(1, 0, 0.5, 0.3, 1.0);
        assert!(action_derivative(&free, &line, &v, DEFAULT_EPSILON, 400).unwrap().abs() <= 1e-8);
        let parabola = PathRepresentation::new(Basis::Monomial, vec![vec![0.0, 0.0, 1.0]], (0.0, 1.0));
        let ds = action_derivative(&free, &parabola, &v, DEFAULT_EPSILON, 400).unwrap();
        // -2 ∫ (1 - u^2)^2 dt over half-width 0.3 = -2 * 0.3 * 16/15
        let exact = -2.0 * 0.3 * 16.0 / 15.0;
        assert!((ds - exact).abs() < 1e-8, "{ds} vs {exact}");
        assert!((first_variation(&free, &parabola, &v, 400).unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn stationarity_examples() {
        let r = stationarity_check(&pu(), &cos_path(2.0 * PI), 20, 1e-6, 42).unwrap();
        assert!(r.pass, "{r:?}");
        let perturbed = ModulatedPath { envelope: Polynomial(vec![1.0, 0.05]), path: cos_path(2.0 * PI) };
        let r = stationarity_check(&pu(), &perturbed, 20, 1e-6, 42).unwrap();
        assert!(!r.pass && r.max_abs_ds > 1e-3, "{r:?}");
        let free = derived(1, "0.5*q1^2");
        let constant = PathRepresentation::new(Basis::Monomial, vec![vec![2.0]], (0.0, 1.0));
        assert!(stationarity_check(&free, &constant, 5, 1e-9, 1).unwrap().pass);
    }

    #[test]
    fn fit_examples() {
        let grid: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
        let states = grid.iter().map(|t| vec![3.0 + 2.0 * t, 2.0]).collect();
        let traj = Trajectory::new(grid, states, StateLayout::Jet { dofs: 1, order: 1 }).unwrap();
        let fit = fit_path(&traj, Basis::Monomial, 2).unwrap();
        assert!(fit.q0_residual < 1e-13 && fit.derivative_residuals[0] < 1e-13);
        let short = Trajectory::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 0.0]; 3], StateLayout::Jet { dofs: 1, order: 1 })
            .unwrap();
        assert_eq!(fit_path(&short, Basis::Monomial, 5), Err(FitError::TooFewPoints { points: 3, coeffs: 5 }));
    }
}
