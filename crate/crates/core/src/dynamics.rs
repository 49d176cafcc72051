//! Time integration of the order-2k Euler–Lagrange system on `J^{2k-1}`
//! and of the unified system on `W_r` (jets plus momenta).

use alloc::vec::Vec;

use crate::eval::EvalError;
use crate::jet::{JetPoint, UnifiedPoint};
use crate::legendre::{DerivedSystem, SolveError};
use crate::ode::{solve, IntegratorOptions, Method, OdeError, StepStats};
use crate::unified::constraint_violation;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("singular Hessian at t = {t} (det = {det:e})")]
    SingularHessian { t: f64, state: Vec<f64>, det: f64 },
    #[error("evaluation failed at t = {t}: {error}")]
    Eval { t: f64, error: EvalError },
    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepUnderflow { t: f64, step: f64 },
    #[error("step limit reached at t = {t}")]
    MaxSteps { t: f64 },
    #[error("invalid integrator options: {0}")]
    InvalidOptions(&'static str),
    #[error("initial point is off the constraint submanifold (residual {residual:e} > {tolerance:e})")]
    OffConstraint { residual: f64, tolerance: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
}

impl DynamicsError {
    /// Last time known to be good, for singularity and evaluation failures.
    pub fn time(&self) -> Option<f64> {
        match self {
            DynamicsError::SingularHessian { t, .. }
            | DynamicsError::Eval { t, .. }
            | DynamicsError::StepUnderflow { t, .. }
            | DynamicsError::MaxSteps { t } => Some(*t),
            _ => None,
        }
    }
}

fn from_ode(e: OdeError<SolveError>) -> DynamicsError {
    match e {
        OdeError::Rhs { t, state, error: SolveError::SingularHessian { det } } => {
            DynamicsError::SingularHessian { t, state, det }
        }
        OdeError::Rhs { t, error: SolveError::Eval(error), .. } => DynamicsError::Eval { t, error },
        OdeError::StepUnderflow { t, step } => DynamicsError::StepUnderflow { t, step },
        OdeError::MaxSteps { t } => DynamicsError::MaxSteps { t },
        OdeError::InvalidOptions(m) => DynamicsError::InvalidOptions(m),
    }
}

/// How a state vector is laid out: `q_0..q_{2k-1}` per dof, followed in
/// the unified case by `p^0..p^{k-1}` per dof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StateLayout {
    Jet { dofs: usize, order: usize },
    Unified { dofs: usize, order: usize },
}

impl StateLayout {
    pub fn dofs(&self) -> usize {
        match self {
            StateLayout::Jet { dofs, .. } | StateLayout::Unified { dofs, .. } => *dofs,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            StateLayout::Jet { order, .. } | StateLayout::Unified { order, .. } => *order,
        }
    }

    pub fn is_unified(&self) -> bool {
        matches!(self, StateLayout::Unified { .. })
    }

    pub fn state_len(&self) -> usize {
        let (n, k) = (self.dofs(), self.order());
        match self {
            StateLayout::Jet { .. } => 2 * k * n,
            StateLayout::Unified { .. } => 3 * k * n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorMeta {
    pub method: Method,
    pub stats: StepStats,
    /// Largest constraint residual seen along a unified trajectory.
    pub max_constraint_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    states: Vec<Vec<f64>>,
    layout: StateLayout,
    pub meta: Option<IntegratorMeta>,
}

impl Trajectory {
    /// Checks that the grid is strictly increasing and every state has the
    /// layout's length.
    pub fn new(grid: Vec<f64>, states: Vec<Vec<f64>>, layout: StateLayout) -> Result<Self, DynamicsError> {
        if grid.is_empty() || grid.len() != states.len() {
            return Err(DynamicsError::InvalidTrajectory("grid and states must be non-empty and of equal length"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DynamicsError::InvalidTrajectory("grid must be strictly increasing"));
        }
        let want = layout.state_len();
        if let Some(s) = states.iter().find(|s| s.len() != want) {
            return Err(DynamicsError::Dimension { expected: want, got: s.len() });
        }
        Ok(Trajectory { grid, states, layout, meta: None })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Jet part of sample `i`.
    pub fn jet_point(&self, i: usize) -> JetPoint {
        let (n, k) = (self.layout.dofs(), self.layout.order());
        JetPoint::new(self.grid[i], n, 2 * k, self.states[i][..2 * k * n].to_vec())
    }

    /// Sample `i` as a point of `W_r`; `None` for jet-only layouts.
    pub fn unified_point(&self, i: usize) -> Option<UnifiedPoint> {
        if !self.layout.is_unified() {
            return None;
        }
        let (n, k) = (self.layout.dofs(), self.layout.order());
        Some(UnifiedPoint::new(self.jet_point(i), self.states[i][2 * k * n..].to_vec(), None))
    }

    /// Values of `q_order^dof` along the grid.
    pub fn series(&self, dof: usize, order: usize) -> Vec<f64> {
        let k = self.layout.order();
        self.states.iter().map(|s| s[dof * 2 * k + order]).collect()
    }

    /// Values of `p_dof^level` along the grid (unified layouts).
    pub fn momentum_series(&self, dof: usize, level: usize) -> Option<Vec<f64>> {
        let (n, k) = (self.layout.dofs(), self.layout.order());
        self.layout.is_unified().then(|| self.states.iter().map(|s| s[2 * k * n + dof * k + level]).collect())
    }

    /// Drops the momenta of a unified trajectory.
    pub fn project_to_jets(&self) -> Trajectory {
        let (n, k) = (self.layout.dofs(), self.layout.order());
        Trajectory {
            grid: self.grid.clone(),
            states: self.states.iter().map(|s| s[..2 * k * n].to_vec()).collect(),
            layout: StateLayout::Jet { dofs: n, order: k },
            meta: self.meta,
        }
    }
}

fn jet_rhs(ds: &DerivedSystem, frame: &mut [f64], t: f64, y: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
    let (n, k) = (ds.dofs(), ds.order());
    let per = 2 * k;
    ds.load_state(frame, t, &y[..per * n]);
    let acc = ds.top_acceleration(frame)?;
    for a in 0..n {
        out[a * per..a * per + per - 1].copy_from_slice(&y[a * per + 1..a * per + per]);
        out[a * per + per - 1] = acc[a];
    }
    Ok(())
}

fn unified_rhs(ds: &DerivedSystem, frame: &mut [f64], t: f64, y: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
    let (n, k) = (ds.dofs(), ds.order());
    let nq = 2 * k * n;
    jet_rhs(ds, frame, t, y, out)?;
    let partials = ds.eval_partials(frame)?;
    for a in 0..n {
        for i in 0..k {
            let mut g = partials[a * (k + 1) + i];
            if i > 0 {
                g -= y[nq + a * k + i - 1];
            }
            out[nq + a * k + i] = g;
        }
    }
    Ok(())
}

/// `d/dt (q_0..q_{2k-1})` at a jet point with `2k` orders: the shifted
/// jets followed by the accelerations `q_{2k}` solving
/// `(-1)^k W q_{2k} + (lower-order Euler–Lagrange terms) = 0`.
pub fn lagrangian_rhs(ds: &DerivedSystem, jp: &JetPoint) -> Result<Vec<f64>, DynamicsError> {
    let expected = 2 * ds.order() * ds.dofs();
    if jp.dofs() != ds.dofs() || jp.orders() != 2 * ds.order() {
        return Err(DynamicsError::Dimension { expected, got: jp.values().len() });
    }
    let mut frame = ds.new_frame();
    let mut out = alloc::vec![0.0; expected];
    jet_rhs(ds, &mut frame, jp.t, jp.values(), &mut out).map_err(|e| {
        from_ode(OdeError::Rhs { t: jp.t, state: jp.values().to_vec(), error: e })
    })?;
    Ok(out)
}

/// Integrates the Euler–Lagrange system from `init` (orders `0..2k-1`).
/// Regularity is checked at every right-hand-side evaluation.
pub fn integrate(
    ds: &DerivedSystem,
    init: &JetPoint,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let layout = StateLayout::Jet { dofs: ds.dofs(), order: ds.order() };
    if init.dofs() != ds.dofs() || init.orders() != 2 * ds.order() {
        return Err(DynamicsError::Dimension { expected: layout.state_len(), got: init.values().len() });
    }
    let mut frame = ds.new_frame();
    let sol = solve(|t, y: &[f64], out: &mut [f64]| jet_rhs(ds, &mut frame, t, y, out), init.t, init.values(), t_end, opts)
        .map_err(from_ode)?;
    let mut traj = Trajectory { grid: sol.grid, states: sol.states, layout, meta: None };
    traj.meta = Some(IntegratorMeta { method: opts.method, stats: sol.stats, max_constraint_residual: None });
    Ok(traj)
}

/// Integrates the unified system
/// `q̇_i = q_{i+1}`, `q̇_{2k-1} = q_{2k}`, `ṗ^0 = ∂L̂/∂q_0`,
/// `ṗ^i = ∂L̂/∂q_i - p^{i-1}` from a point on the constraint submanifold.
/// Logs a warning when the constraints drift past ten times the
/// integrator tolerance.
pub fn integrate_unified(
    ds: &DerivedSystem,
    init: &UnifiedPoint,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let layout = StateLayout::Unified { dofs: ds.dofs(), order: ds.order() };
    if init.dofs() != ds.dofs() || init.order() != ds.order() {
        return Err(DynamicsError::Dimension {
            expected: layout.state_len(),
            got: init.jet.values().len() + init.momenta.len(),
        });
    }
    let (residual, tolerance) =
        constraint_violation(ds, init).map_err(|error| DynamicsError::Eval { t: init.jet.t, error })?;
    if !(residual <= tolerance) {
        return Err(DynamicsError::OffConstraint { residual, tolerance });
    }
    let mut y0 = init.jet.values().to_vec();
    y0.extend_from_slice(&init.momenta);
    let mut frame = ds.new_frame();
    let sol = solve(|t, y: &[f64], out: &mut [f64]| unified_rhs(ds, &mut frame, t, y, out), init.jet.t, &y0, t_end, opts)
        .map_err(from_ode)?;
    let mut traj = Trajectory { grid: sol.grid, states: sol.states, layout, meta: None };
    let mut worst: f64 = 0.0;
    for i in 0..traj.len() {
        let up = traj.unified_point(i).expect("unified layout");
        let (r, _) = constraint_violation(ds, &up).map_err(|error| DynamicsError::Eval { t: traj.grid[i], error })?;
        worst = worst.max(r);
    }
    let limit = 10.0 * opts.method.tolerance();
    if worst > limit {
        log::warn!("constraint residual drifted to {worst:e} (limit {limit:e})");
    }
    traj.meta = Some(IntegratorMeta { method: opts.method, stats: sol.stats, max_constraint_residual: Some(worst) });
    Ok(traj)
}

/// `E = Σ p_A^i q_{i+1}^A - L` with the momenta given by the Legendre map.
pub fn ostrogradsky_energy(ds: &DerivedSystem, jp: &JetPoint) -> Result<f64, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    let frame = ds.frame_for_jet(jp);
    let p = ds.eval_momenta(&frame)?;
    let mut e = -ds.eval_lagrangian(&frame)?;
    for a in 0..n {
        for i in 0..k {
            e += p[a * k + i] * jp.q(a, i + 1);
        }
    }
    Ok(e)
}
