//! Pointwise Skinner–Rusk objects on `W_r`.
//!
//! Coordinates are always ordered `t`, then `q_0..q_{2k-1}` per dof, then
//! `p^0..p^{k-1}` per dof (see [`crate::legendre::coordinate_vars`]). A
//! two-form is stored as the matrix `M` with `Ω(u, v) = uᵀ M v`, so
//! `i(X)Ω = 0` reads `M X = 0`.
//!
//! Sign convention: with `Ĥ = Σ p^i q_{i+1} - L̂` the momenta obey
//! `ṗ^i = -∂Ĥ/∂q_i`.

use alloc::vec;
use alloc::vec::Vec;

use crate::eval::EvalError;
use crate::jet::UnifiedPoint;
use crate::legendre::{DerivedSystem, SolveError};
use crate::linalg::{Lu, Matrix};

/// Condition numbers above this trigger a warning in the kernel solve.
pub const CONDITION_WARN: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum UnifiedError {
    #[error("point has no extended momentum coordinate p")]
    MissingExtended,
    #[error("point is off the constraint submanifold (residual {residual:e} > {tolerance:e})")]
    OffConstraint { residual: f64, tolerance: f64 },
    #[error("singular Hessian (det = {det:e}); type-1 closure impossible")]
    SingularHessian { det: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<SolveError> for UnifiedError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Eval(e) => UnifiedError::Eval(e),
            SolveError::SingularHessian { det } => UnifiedError::SingularHessian { det },
        }
    }
}

/// Antisymmetric coordinate matrix of a two-form at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoFormMatrix {
    entries: Matrix,
}

impl TwoFormMatrix {
    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    /// `M x`, the coordinates of `-i(x)Ω`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries.mul_vec(x)
    }

    fn add_wedge(&mut self, i: usize, j: usize, c: f64) {
        self.entries[(i, j)] += c;
        self.entries[(j, i)] -= c;
    }
}

/// Tangent vector on `W_r` in the coordinate ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct SemisprayVector {
    pub components: Vec<f64>,
    dofs: usize,
    order: usize,
}

impl SemisprayVector {
    pub fn new(components: Vec<f64>, dofs: usize, order: usize) -> Self {
        assert_eq!(components.len(), 3 * order * dofs + 1);
        SemisprayVector { components, dofs, order }
    }

    pub fn zeros(dofs: usize, order: usize) -> Self {
        SemisprayVector::new(vec![0.0; 3 * order * dofs + 1], dofs, order)
    }

    /// Time component `f`.
    pub fn time(&self) -> f64 {
        self.components[0]
    }

    /// `f_i^A` for `i < 2k - 1`, and `F_{2k-1}^A` for `i = 2k - 1`.
    pub fn jet(&self, dof: usize, order: usize) -> f64 {
        self.components[jet_index(self.order, dof, order)]
    }

    /// `G_A^i`.
    pub fn momentum(&self, dof: usize, level: usize) -> f64 {
        self.components[momentum_index(self.dofs, self.order, dof, level)]
    }

    pub fn max_abs_diff(&self, other: &SemisprayVector) -> f64 {
        self.components.iter().zip(&other.components).fold(0.0, |m, (a, b)| libm::fmax(m, libm::fabs(a - b)))
    }
}

pub(crate) fn jet_index(order: usize, dof: usize, i: usize) -> usize {
    1 + dof * 2 * order + i
}

pub(crate) fn momentum_index(dofs: usize, order: usize, dof: usize, level: usize) -> usize {
    1 + 2 * order * dofs + dof * order + level
}

pub(crate) fn frame_for_unified(ds: &DerivedSystem, up: &UnifiedPoint) -> Vec<f64> {
    assert_eq!(up.order(), ds.order(), "unified point order");
    assert_eq!(up.dofs(), ds.dofs(), "unified point dofs");
    let mut f = ds.frame_for_jet(&up.jet);
    ds.load_momenta(&mut f, &up.momenta);
    f
}

fn sup(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| libm::fmax(m, libm::fabs(*x)))
}

/// `Ĉ = p + Σ p_A^i q_{i+1}^A`.
pub fn coupling(up: &UnifiedPoint) -> Result<f64, UnifiedError> {
    let p = up.p_ext.ok_or(UnifiedError::MissingExtended)?;
    let (n, k) = (up.dofs(), up.order());
    let mut c = p;
    for a in 0..n {
        for i in 0..k {
            c += up.p(a, i) * up.jet.q(a, i + 1);
        }
    }
    Ok(c)
}

/// The `p` placing the point on `W_o`: `p = L̂ - Σ p_A^i q_{i+1}^A = -Ĥ`.
pub fn hamiltonian_section_p(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<f64, EvalError> {
    Ok(-ds.eval_h_hat(&frame_for_unified(ds, up))?)
}

/// `Ĥ` at the point.
pub fn h_hat_value(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<f64, EvalError> {
    ds.eval_h_hat(&frame_for_unified(ds, up))
}

/// `∂Ĥ` along the coordinates of `W_r`.
pub fn h_hat_gradient(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<Vec<f64>, EvalError> {
    ds.h_grad.eval_all(&frame_for_unified(ds, up))
}

/// `Ω_r = dq_i^A ∧ dp_A^i + dĤ ∧ dt` at the point.
pub fn omega_r_matrix(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<TwoFormMatrix, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    let grad = h_hat_gradient(ds, up)?;
    let dim = ds.unified_dim();
    let mut m = TwoFormMatrix { entries: Matrix::zeros(dim, dim) };
    for a in 0..n {
        for i in 0..k {
            m.add_wedge(jet_index(k, a, i), momentum_index(n, k, a, i), 1.0);
        }
    }
    for (x, g) in grad.iter().enumerate().skip(1) {
        if *g != 0.0 {
            m.add_wedge(x, 0, *g);
        }
    }
    Ok(m)
}

/// Residuals of the constraint generations, `levels[l - 1][A]` for
/// `l = 1..=k`: `p_A^{k-l} - FL*p_A^{k-l}`.
pub fn constraint_residuals(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<Vec<Vec<f64>>, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    let fl = ds.eval_momenta(&frame_for_unified(ds, up))?;
    Ok((1..=k)
        .map(|l| (0..n).map(|a| up.p(a, k - l) - fl[a * k + k - l]).collect())
        .collect())
}

/// Largest absolute constraint residual and the scale-aware tolerance
/// `1e-8 (1 + ‖p‖_∞)`.
pub fn constraint_violation(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<(f64, f64), EvalError> {
    let residual = constraint_residuals(ds, up)?.iter().map(|l| sup(l)).fold(0.0, libm::fmax);
    Ok((residual, 1e-8 * (1.0 + sup(&up.momenta))))
}

fn require_on_constraint(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<(), UnifiedError> {
    let (residual, tolerance) = constraint_violation(ds, up)?;
    if !(residual <= tolerance) {
        return Err(UnifiedError::OffConstraint { residual, tolerance });
    }
    Ok(())
}

/// Gauge-fixed solution of `i(X)Ω_r = 0` closed to a type-1 semispray,
/// obtained by assembling and solving one square linear system:
///
/// * `X_t = 1` (substituted, so it holds exactly);
/// * the `p^i` and `q_i` (`i < k`) rows of `M X = 0`;
/// * `f_i = q_{i+1}` for `k <= i <= 2k - 2`;
/// * tangency of the last constraint generation, `d(p^0 - FL*p^0)(X) = 0`.
pub fn solve_unified_vf(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<SemisprayVector, UnifiedError> {
    require_on_constraint(ds, up)?;
    let (n, k) = (ds.dofs(), ds.order());
    let frame = frame_for_unified(ds, up);
    let w = ds.eval_hessian(&frame)?;
    if crate::legendre::hessian_is_singular(&w) {
        return Err(UnifiedError::SingularHessian { det: Lu::new(&w).det() });
    }
    let omega = omega_r_matrix(ds, up)?;
    let tangency = ds.tangency_grad.eval_all(&frame)?;
    // Unknowns are X without its time component, which the gauge fixes to
    // 1; the time column of each equation moves to the right-hand side.
    let dim = ds.unified_dim();
    let m = dim - 1;
    let mut a = Matrix::zeros(m, m);
    let mut b = vec![0.0; m];
    let mut row = 0;
    let mut push = |coeffs: &dyn Fn(usize) -> f64, rhs: f64, row: &mut usize| {
        for c in 1..dim {
            a[(*row, c - 1)] = coeffs(c);
        }
        b[*row] = rhs - coeffs(0);
        *row += 1;
    };
    for d in 0..n {
        for i in 0..k {
            for src in [momentum_index(n, k, d, i), jet_index(k, d, i)] {
                push(&|c| omega.get(src, c), 0.0, &mut row);
            }
        }
        for i in k..2 * k - 1 {
            let target = jet_index(k, d, i);
            push(&|c| if c == target { 1.0 } else { 0.0 }, up.jet.q(d, i + 1), &mut row);
        }
        push(&|c| tangency[d * dim + c], 0.0, &mut row);
    }
    debug_assert_eq!(row, m);
    let lu = Lu::new(&a);
    let cond = lu.condition_1();
    if cond > CONDITION_WARN {
        log::warn!("kernel solve condition estimate {cond:e} exceeds {CONDITION_WARN:e}");
    }
    let rest = lu.solve(&b).ok_or(UnifiedError::SingularHessian { det: Lu::new(&w).det() })?;
    let mut x = Vec::with_capacity(dim);
    x.push(1.0);
    x.extend(rest);
    Ok(SemisprayVector::new(x, n, k))
}

/// The coordinate semispray written out directly: `f = 1`,
/// `f_i = q_{i+1}`, `F_{2k-1} = q_{2k}` from the Euler–Lagrange equations,
/// `G^0 = ∂L̂/∂q_0`, `G^i = ∂L̂/∂q_i - p^{i-1}`.
pub fn explicit_semispray(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<SemisprayVector, UnifiedError> {
    require_on_constraint(ds, up)?;
    let (n, k) = (ds.dofs(), ds.order());
    let frame = frame_for_unified(ds, up);
    let acc = ds.top_acceleration(&frame)?;
    let partials = ds.eval_partials(&frame)?;
    let mut x = SemisprayVector::zeros(n, k);
    x.components[0] = 1.0;
    for a in 0..n {
        for i in 0..2 * k - 1 {
            x.components[jet_index(k, a, i)] = up.jet.q(a, i + 1);
        }
        x.components[jet_index(k, a, 2 * k - 1)] = acc[a];
        for i in 0..k {
            let mut g = partials[a * (k + 1) + i];
            if i > 0 {
                g -= up.p(a, i - 1);
            }
            x.components[momentum_index(n, k, a, i)] = g;
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    /// `‖M X‖_∞`.
    pub residual: f64,
    /// Time component of `X`; `1` under the gauge.
    pub transversality: f64,
}

pub fn kernel_check(ds: &DerivedSystem, up: &UnifiedPoint, x: &SemisprayVector) -> Result<KernelReport, EvalError> {
    let m = omega_r_matrix(ds, up)?;
    Ok(KernelReport { residual: sup(&m.apply(&x.components)), transversality: x.time() })
}
