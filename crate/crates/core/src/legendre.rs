//! Symbolic derivation of the Legendre–Ostrogradsky map, the Euler–Lagrange
//! expressions, the regularity Hessian and the unified Hamiltonian `Ĥ`.
//!
//! With `L̂` the Lagrangian pulled back to `W_r`:
//!
//! * momenta: `p_A^{r-1} = Σ_{i=0}^{k-r} (-1)^i d_T^i (∂L̂/∂q_{r+i}^A)`;
//! * Euler–Lagrange: `Σ_{i=0}^{k} (-1)^i d_T^i (∂L/∂q_i^A)`, affine in
//!   `q_{2k}` with slope `(-1)^k W`;
//! * Hessian: `W_AB = ∂²L/∂q_k^A ∂q_k^B`;
//! * `Ĥ = Σ p_A^i q_{i+1}^A - L̂`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{diff, total_derivative, total_derivative_n};
use crate::equiv::SampleBox;
use crate::eval::{Compiled, EvalError};
use crate::expr::{Expr, Var};
use crate::jet::{JetPoint, SystemModel};
use crate::linalg::{symmetric_eigenvalues, Lu, Matrix};
use crate::simplify::simplify;

/// Jet orders available to derived expressions: `0..=2k+1`.
pub(crate) fn jet_cap(order: usize) -> usize {
    2 * order + 1
}

fn lagrangian_of(sys: &SystemModel) -> Expr {
    simplify(&sys.bound_lagrangian())
}

fn top_partials(l: &Expr, n: usize, k: usize) -> Vec<Vec<Expr>> {
    (0..n).map(|a| (0..=k).map(|i| simplify(&diff(l, &Var::jet(a, i)))).collect()).collect()
}

fn closed_form_momenta(partials: &[Vec<Expr>], k: usize) -> Vec<Vec<Expr>> {
    let cap = jet_cap(k);
    partials
        .iter()
        .map(|pa| {
            (1..=k)
                .map(|r| {
                    let terms = (0..=k - r)
                        .map(|i| {
                            let d = total_derivative_n(&pa[r + i], i, cap).expect("order within cap");
                            if i % 2 == 0 { d } else { -d }
                        })
                        .collect();
                    simplify(&Expr::sum(terms))
                })
                .collect()
        })
        .collect()
}

/// Closed-form momenta `p_A^{r-1}`, indexed `[dof][level]`.
pub fn momentum_exprs(sys: &SystemModel) -> Vec<Vec<Expr>> {
    let k = sys.order();
    closed_form_momenta(&top_partials(&lagrangian_of(sys), sys.dofs(), k), k)
}

/// The same momenta built by the tangency chain
/// `p^{k-1} = ∂L̂/∂q_k`, `p^{i-1} = ∂L̂/∂q_i - d_T p^i`.
pub fn momenta_by_recursion(sys: &SystemModel) -> Vec<Vec<Expr>> {
    let k = sys.order();
    let cap = jet_cap(k);
    top_partials(&lagrangian_of(sys), sys.dofs(), k)
        .into_iter()
        .map(|pa| {
            let mut levels = vec![Expr::zero(); k];
            levels[k - 1] = pa[k].clone();
            for i in (1..k).rev() {
                let dt = total_derivative(&levels[i], cap).expect("order within cap");
                levels[i - 1] = simplify(&(&pa[i] - &dt));
            }
            levels
        })
        .collect()
}

fn el_from_partials(partials: &[Vec<Expr>], k: usize) -> Vec<Expr> {
    let cap = jet_cap(k);
    partials
        .iter()
        .map(|pa| {
            let terms = (0..=k)
                .map(|i| {
                    let d = total_derivative_n(&pa[i], i, cap).expect("order within cap");
                    if i % 2 == 0 { d } else { -d }
                })
                .collect();
            simplify(&Expr::sum(terms))
        })
        .collect()
}

/// Euler–Lagrange left-hand sides, one per dof, in jet orders `<= 2k`.
pub fn euler_lagrange_exprs(sys: &SystemModel) -> Vec<Expr> {
    let k = sys.order();
    el_from_partials(&top_partials(&lagrangian_of(sys), sys.dofs(), k), k)
}

/// `W_AB = ∂²L/∂q_k^A ∂q_k^B`, row-major `n × n`.
pub fn hessian_exprs(sys: &SystemModel) -> Vec<Expr> {
    let k = sys.order();
    let partials = top_partials(&lagrangian_of(sys), sys.dofs(), k);
    hessian_from_partials(&partials, sys.dofs(), k)
}

fn hessian_from_partials(partials: &[Vec<Expr>], n: usize, k: usize) -> Vec<Expr> {
    let mut out = Vec::with_capacity(n * n);
    for pa in partials.iter().take(n) {
        for b in 0..n {
            out.push(simplify(&diff(&pa[k], &Var::jet(b, k))));
        }
    }
    out
}

/// Coordinates of `W_r` in the fixed ordering: `t`, then `q_0..q_{2k-1}`
/// per dof, then `p^0..p^{k-1}` per dof.
pub fn coordinate_vars(dofs: usize, order: usize) -> Vec<Var> {
    let mut v = vec![Var::Time];
    for a in 0..dofs {
        for i in 0..2 * order {
            v.push(Var::jet(a, i));
        }
    }
    for a in 0..dofs {
        for l in 0..order {
            v.push(Var::momentum(a, l));
        }
    }
    v
}

/// Slot layout of the evaluation frame shared by every compiled
/// expression of a [`DerivedSystem`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct FrameLayout {
    dofs: usize,
    order: usize,
}

impl FrameLayout {
    fn jets_per_dof(&self) -> usize {
        jet_cap(self.order) + 1
    }

    pub(crate) fn len(&self) -> usize {
        2 + self.dofs * (self.jets_per_dof() + self.order)
    }

    pub(crate) fn slot(&self, v: &Var) -> Option<usize> {
        let j = self.jets_per_dof();
        match v {
            Var::Time => Some(0),
            Var::Jet { dof, order } if *dof < self.dofs && *order < j => Some(1 + dof * j + order),
            Var::Momentum { dof, level } if *dof < self.dofs && *level < self.order => {
                Some(1 + self.dofs * j + dof * self.order + level)
            }
            Var::ExtMomentum => Some(1 + self.dofs * (j + self.order)),
            _ => None,
        }
    }

    pub(crate) fn jet_slot(&self, dof: usize, order: usize) -> usize {
        1 + dof * self.jets_per_dof() + order
    }

    pub(crate) fn momentum_slot(&self, dof: usize, level: usize) -> usize {
        1 + self.dofs * self.jets_per_dof() + dof * self.order + level
    }
}

/// Expressions together with their compiled tapes.
#[derive(Clone, Debug)]
pub(crate) struct Tape {
    pub(crate) exprs: Vec<Expr>,
    code: Vec<Compiled>,
}

impl Tape {
    fn new(exprs: Vec<Expr>, layout: FrameLayout) -> Self {
        let code = exprs
            .iter()
            .map(|e| Compiled::new(e, &|v| layout.slot(v)).expect("derived expressions use frame variables only"))
            .collect();
        Tape { exprs, code }
    }

    pub(crate) fn eval(&self, i: usize, frame: &[f64]) -> Result<f64, EvalError> {
        self.code[i].eval(frame)
    }

    pub(crate) fn eval_all(&self, frame: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut stack = Vec::new();
        self.code.iter().map(|c| c.eval_with(frame, &mut stack)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("singular Hessian (det = {det:e})")]
    SingularHessian { det: f64 },
}

/// Singularity rule for the Hessian: `|det W| <= 1e-9 (1 + ‖W‖_∞^n)`.
pub fn hessian_is_singular(w: &Matrix) -> bool {
    let det = Lu::new(w).det();
    libm::fabs(det) <= hessian_threshold(w)
}

fn hessian_threshold(w: &Matrix) -> f64 {
    1e-9 * (1.0 + libm::pow(w.norm_inf(), w.rows() as f64))
}

/// Everything derived symbolically from a [`SystemModel`]. Immutable and
/// shareable across threads.
#[derive(Clone, Debug)]
pub struct DerivedSystem {
    name: String,
    order: usize,
    dofs: usize,
    autonomous: bool,
    layout: FrameLayout,
    lagrangian: Tape,
    /// `∂L/∂q_i^A`, index `A (k+1) + i`.
    pub(crate) partials: Tape,
    momenta: Tape,
    el: Tape,
    /// `el` with every `q_{2k}` set to zero.
    el_lower: Tape,
    hessian: Tape,
    h_hat: Tape,
    /// `∂Ĥ` along the `W_r` coordinates.
    pub(crate) h_grad: Tape,
    /// Gradients of the last-generation constraints `p_A^0 - FL*p_A^0`,
    /// index `A dim + c`.
    pub(crate) tangency_grad: Tape,
    /// `∂(FL*p_A^i)/∂q_{k+j}^B`, row `(A, i)`, column `(B, j)`.
    momenta_jac: Tape,
}

impl DerivedSystem {
    pub fn new(sys: &SystemModel) -> Self {
        let (n, k) = (sys.dofs(), sys.order());
        let layout = FrameLayout { dofs: n, order: k };
        let l = lagrangian_of(sys);
        let partials = top_partials(&l, n, k);
        let momenta: Vec<Expr> = closed_form_momenta(&partials, k).into_iter().flatten().collect();
        let el = el_from_partials(&partials, k);
        let el_lower: Vec<Expr> = el
            .iter()
            .map(|e| simplify(&e.substitute(&|v| match v {
                Var::Jet { order, .. } if *order == 2 * k => Some(Expr::zero()),
                _ => None,
            })))
            .collect();
        let hessian = hessian_from_partials(&partials, n, k);

        let mut h_terms = vec![-l.clone()];
        for a in 0..n {
            for i in 0..k {
                h_terms.push(Expr::momentum(a, i) * Expr::jet(a, i + 1));
            }
        }
        let h_hat = simplify(&Expr::sum(h_terms));
        let coords = coordinate_vars(n, k);
        let h_grad: Vec<Expr> = coords.iter().map(|v| simplify(&diff(&h_hat, v))).collect();

        let mut tangency_grad = Vec::with_capacity(n * coords.len());
        for a in 0..n {
            let xi = simplify(&(&Expr::momentum(a, 0) - &momenta[a * k]));
            tangency_grad.extend(coords.iter().map(|v| simplify(&diff(&xi, v))));
        }

        let mut momenta_jac = Vec::with_capacity(n * k * n * k);
        for m in &momenta {
            for b in 0..n {
                for j in 0..k {
                    momenta_jac.push(simplify(&diff(m, &Var::jet(b, k + j))));
                }
            }
        }

        DerivedSystem {
            name: sys.name().into(),
            order: k,
            dofs: n,
            autonomous: sys.autonomous(),
            layout,
            lagrangian: Tape::new(vec![l], layout),
            partials: Tape::new(partials.into_iter().flatten().collect(), layout),
            momenta: Tape::new(momenta, layout),
            el: Tape::new(el, layout),
            el_lower: Tape::new(el_lower, layout),
            hessian: Tape::new(hessian, layout),
            h_hat: Tape::new(vec![h_hat], layout),
            h_grad: Tape::new(h_grad, layout),
            tangency_grad: Tape::new(tangency_grad, layout),
            momenta_jac: Tape::new(momenta_jac, layout),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dofs(&self) -> usize {
        self.dofs
    }

    pub fn autonomous(&self) -> bool {
        self.autonomous
    }

    /// Dimension of `W_r`: `3kn + 1`.
    pub fn unified_dim(&self) -> usize {
        3 * self.order * self.dofs + 1
    }

    /// The Lagrangian with parameters bound.
    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian.exprs[0]
    }

    /// `p_A^i` as functions on `J^{2k-1}`, index `A k + i`.
    pub fn momenta(&self) -> &[Expr] {
        &self.momenta.exprs
    }

    pub fn momentum(&self, dof: usize, level: usize) -> &Expr {
        &self.momenta.exprs[dof * self.order + level]
    }

    pub fn euler_lagrange(&self) -> &[Expr] {
        &self.el.exprs
    }

    /// Row-major `n × n`.
    pub fn hessian(&self) -> &[Expr] {
        &self.hessian.exprs
    }

    pub fn h_hat(&self) -> &Expr {
        &self.h_hat.exprs[0]
    }

    /// `∂L/∂q_i^A`.
    pub fn partial(&self, dof: usize, order: usize) -> &Expr {
        &self.partials.exprs[dof * (self.order + 1) + order]
    }

    pub(crate) fn new_frame(&self) -> Vec<f64> {
        vec![0.0; self.layout.len()]
    }

    /// Writes `t` and the available jet orders (at most `2k + 1`) of `jp`.
    pub(crate) fn load_jet(&self, frame: &mut [f64], jp: &JetPoint) {
        frame[0] = jp.t;
        let orders = jp.orders().min(jet_cap(self.order) + 1);
        for a in 0..self.dofs {
            for i in 0..orders {
                frame[self.layout.jet_slot(a, i)] = jp.q(a, i);
            }
        }
    }

    /// Loads `t, q` from a flat dof-major state with `2k` orders per dof.
    pub(crate) fn load_state(&self, frame: &mut [f64], t: f64, q: &[f64]) {
        frame[0] = t;
        let per = 2 * self.order;
        for a in 0..self.dofs {
            for i in 0..per {
                frame[self.layout.jet_slot(a, i)] = q[a * per + i];
            }
        }
    }

    pub(crate) fn load_momenta(&self, frame: &mut [f64], p: &[f64]) {
        for a in 0..self.dofs {
            for l in 0..self.order {
                frame[self.layout.momentum_slot(a, l)] = p[a * self.order + l];
            }
        }
    }

    pub(crate) fn set_jet(&self, frame: &mut [f64], dof: usize, order: usize, value: f64) {
        frame[self.layout.jet_slot(dof, order)] = value;
    }

    pub(crate) fn frame_for_jet(&self, jp: &JetPoint) -> Vec<f64> {
        let mut f = self.new_frame();
        self.load_jet(&mut f, jp);
        f
    }

    pub(crate) fn eval_lagrangian(&self, frame: &[f64]) -> Result<f64, EvalError> {
        self.lagrangian.eval(0, frame)
    }

    pub(crate) fn eval_h_hat(&self, frame: &[f64]) -> Result<f64, EvalError> {
        self.h_hat.eval(0, frame)
    }

    pub(crate) fn eval_momenta(&self, frame: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.momenta.eval_all(frame)
    }

    pub(crate) fn eval_el(&self, frame: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.el.eval_all(frame)
    }

    pub(crate) fn eval_hessian(&self, frame: &[f64]) -> Result<Matrix, EvalError> {
        Ok(Matrix::from_rows(self.dofs, self.dofs, self.hessian.eval_all(frame)?))
    }

    pub(crate) fn eval_partials(&self, frame: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.partials.eval_all(frame)
    }

    /// `q_{2k}` solving `(-1)^k W q_{2k} + el|_{q_{2k}=0} = 0`.
    pub(crate) fn top_acceleration(&self, frame: &[f64]) -> Result<Vec<f64>, SolveError> {
        let w = self.eval_hessian(frame)?;
        let lu = Lu::new(&w);
        let det = lu.det();
        if libm::fabs(det) <= hessian_threshold(&w) {
            return Err(SolveError::SingularHessian { det });
        }
        let sign = if self.order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let rhs: Vec<f64> = self.el_lower.eval_all(frame)?.into_iter().map(|r| -sign * r).collect();
        lu.solve(&rhs).ok_or(SolveError::SingularHessian { det })
    }
}

/// Pointwise Legendre–Ostrogradsky map; `jp` needs `2k` orders per dof.
/// Returns `p_A^i` dof-major.
pub fn legendre_map(ds: &DerivedSystem, jp: &JetPoint) -> Result<Vec<f64>, EvalError> {
    assert!(jp.orders() >= 2 * ds.order(), "jet point needs orders 0..2k-1");
    ds.eval_momenta(&ds.frame_for_jet(jp))
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InverseError {
    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

const NEWTON_MAX_ITER: usize = 50;

/// Solves `FL(t, base, x) = momenta` for `x = (q_k..q_{2k-1})` per dof by
/// damped Newton (step halving). `base` holds `q_0..q_{k-1}` per dof.
pub fn legendre_inverse(
    ds: &DerivedSystem,
    t: f64,
    base: &[f64],
    momenta: &[f64],
    guess: &[f64],
) -> Result<Vec<f64>, InverseError> {
    let (n, k) = (ds.dofs(), ds.order());
    assert_eq!(base.len(), n * k);
    assert_eq!(momenta.len(), n * k);
    assert_eq!(guess.len(), n * k);
    let mut frame = ds.new_frame();
    frame[0] = t;
    for a in 0..n {
        for i in 0..k {
            ds.set_jet(&mut frame, a, i, base[a * k + i]);
        }
    }
    let scale = 1.0 + momenta.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)));
    let tol = 1e-10 * scale;
    let residual = |frame: &mut Vec<f64>, x: &[f64]| -> Result<(Vec<f64>, f64), EvalError> {
        for a in 0..n {
            for j in 0..k {
                ds.set_jet(frame, a, k + j, x[a * k + j]);
            }
        }
        let r: Vec<f64> = ds.eval_momenta(frame)?.iter().zip(momenta).map(|(m, p)| m - p).collect();
        let norm = r.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)));
        Ok((r, norm))
    };
    let mut x = guess.to_vec();
    let (mut r, mut norm) = residual(&mut frame, &x)?;
    // The Jacobian is checked before the residual so that a degenerate map
    // is reported even when the guess happens to solve it.
    for iteration in 0..NEWTON_MAX_ITER {
        let jac = Matrix::from_rows(n * k, n * k, ds.momenta_jac.eval_all(&frame)?);
        let lu = Lu::new(&jac);
        if lu.is_singular() || libm::fabs(lu.det()) <= 1e-12 * (1.0 + libm::pow(jac.norm_inf(), (n * k) as f64)) {
            return Err(InverseError::SingularJacobian { iteration });
        }
        if norm <= tol {
            return Ok(x);
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg).ok_or(InverseError::SingularJacobian { iteration })?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
            let (tr, tn) = residual(&mut frame, &trial)?;
            if tn < norm || lambda < 1e-6 {
                x = trial;
                r = tr;
                norm = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if norm <= tol {
        return Ok(x);
    }
    Err(InverseError::NoConvergence { iterations: NEWTON_MAX_ITER, residual: norm })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    /// `|det W|` above threshold at every sample and no sign change seen.
    pub regular: bool,
    pub min_abs_det: f64,
    pub worst_point: JetPoint,
    pub rank_at_worst: usize,
    /// Singular values of `W` at the worst point, decreasing.
    pub singular_values: Vec<f64>,
    /// `det W` took both signs over the samples, so it vanishes somewhere in
    /// the (connected) box.
    pub det_sign_change: bool,
    pub samples: usize,
}

/// Samples `det W` over `domain` (box centre first, then `samples` seeded
/// random points over `t` and `q_0..q_k`).
pub fn regularity_report(
    ds: &DerivedSystem,
    domain: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<RegularityReport, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, JetPoint, Matrix)> = None;
    let (mut pos, mut neg) = (false, false);
    let mut all_regular = true;
    for s in 0..=samples {
        let mut jp = JetPoint::zeros(0.0, n, 2 * k);
        let pick = |v: &Var, rng: &mut ChaCha8Rng| if s == 0 { domain.center(v) } else { domain.draw(v, rng) };
        jp.t = pick(&Var::Time, &mut rng);
        for a in 0..n {
            for i in 0..=k {
                jp.set(a, i, pick(&Var::jet(a, i), &mut rng));
            }
        }
        let w = ds.eval_hessian(&ds.frame_for_jet(&jp))?;
        let det = Lu::new(&w).det();
        if libm::fabs(det) <= hessian_threshold(&w) {
            all_regular = false;
        } else if det > 0.0 {
            pos = true;
        } else {
            neg = true;
        }
        if worst.as_ref().is_none_or(|(d, _, _)| libm::fabs(det) < *d) {
            worst = Some((libm::fabs(det), jp, w));
        }
    }
    let (min_abs_det, worst_point, w) = worst.expect("at least the centre sample");
    let singular_values: Vec<f64> = {
        let mut sv: Vec<f64> = symmetric_eigenvalues(&w).into_iter().map(libm::fabs).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    };
    let cutoff = 1e-9 * singular_values.first().copied().unwrap_or(0.0).max(1.0);
    let rank_at_worst = singular_values.iter().filter(|s| **s > cutoff).count();
    let det_sign_change = pos && neg;
    Ok(RegularityReport {
        regular: all_regular && !det_sign_change,
        min_abs_det,
        worst_point,
        rank_at_worst,
        singular_values,
        det_sign_change,
        samples: samples + 1,
    })
}
