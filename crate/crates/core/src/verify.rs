//! Residual checks along discrete trajectories.
//!
//! Time derivatives of stored columns are taken with five-point Fornberg
//! stencils on the (possibly non-uniform) grid: centred in the interior,
//! shifted at the ends, fourth order throughout.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{ostrogradsky_energy, StateLayout, Trajectory};
use crate::eval::EvalError;
use crate::legendre::DerivedSystem;
use crate::unified::{jet_index, momentum_index};

/// Finite-difference weights for the `m`-th derivative at `z` on the nodes
/// `x` (Fornberg's recursion).
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[m]).collect()
}

const STENCIL: usize = 5;

/// First-derivative operator on a fixed grid.
pub struct Differentiator {
    windows: Vec<(usize, Vec<f64>)>,
}

impl Differentiator {
    pub fn new(grid: &[f64]) -> Self {
        let n = grid.len();
        let width = STENCIL.min(n);
        let windows = (0..n)
            .map(|i| {
                if width < 2 {
                    return (i, vec![0.0]);
                }
                let start = i.saturating_sub(width / 2).min(n - width);
                (start, fornberg_weights(grid[i], &grid[start..start + width], 1))
            })
            .collect();
        Differentiator { windows }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.windows
            .iter()
            .map(|(start, w)| w.iter().zip(&values[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerifyThresholds {
    pub el: f64,
    pub momenta: f64,
    pub hamilton: f64,
    pub energy: f64,
    /// Relative to `1 + max|q_{i+1}|`.
    pub holonomy: f64,
}

impl VerifyThresholds {
    /// Thresholds scaled from an integrator tolerance: holonomy at `10 tol`,
    /// energy drift at `100 tol`, equation residuals at `1000 tol`.
    pub fn for_tolerance(tol: f64) -> Self {
        VerifyThresholds { el: 1e3 * tol, momenta: 1e3 * tol, hamilton: 1e3 * tol, energy: 1e2 * tol, holonomy: 10.0 * tol }
    }
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        VerifyThresholds::for_tolerance(1e-9)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerificationReport {
    /// Max `|EL_A|` with every `q_i`, `i >= 1`, replaced by the numerical
    /// derivative of the stored `q_{i-1}`.
    pub el_residual: f64,
    /// Max `|ṗ^i - G^i|` (unified layouts only).
    pub momenta_residual: Option<f64>,
    /// Max `|q̇_i - ∂Ĥ/∂p^i|`.
    pub hamilton_q_residual: f64,
    /// Max `|ṗ^i + ∂Ĥ/∂q_i|`; jet layouts use momenta from the Legendre map.
    pub hamilton_p_residual: f64,
    /// Max `|E(t) - E(t_0)|` (autonomous systems only).
    pub energy_drift: Option<f64>,
    /// Max over `i < 2k-1` of `|d q_i/dt - q_{i+1}| / (1 + max|q_{i+1}|)`.
    pub holonomy_residual: f64,
    pub holonomic: bool,
    /// Max constraint residual (unified layouts only).
    pub constraint_residual: Option<f64>,
    pub thresholds: VerifyThresholds,
    /// Names of the checks above their thresholds.
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| libm::fmax(m, libm::fabs(x - y)))
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| libm::fmax(m, libm::fabs(*x)))
}

pub fn verify_trajectory(
    ds: &DerivedSystem,
    traj: &Trajectory,
    thresholds: &VerifyThresholds,
) -> Result<VerificationReport, EvalError> {
    let (n, k) = (ds.dofs(), ds.order());
    let layout = traj.layout();
    assert_eq!((layout.dofs(), layout.order()), (n, k), "trajectory layout must match the system");
    let len = traj.len();
    let grid = traj.grid();
    let d = Differentiator::new(grid);

    let q: Vec<Vec<f64>> = (0..n).flat_map(|a| (0..2 * k).map(move |i| (a, i))).map(|(a, i)| traj.series(a, i)).collect();
    let dq: Vec<Vec<f64>> = q.iter().map(|c| d.apply(c)).collect();
    let col = |a: usize, i: usize| a * 2 * k + i;

    let mut holonomy_residual: f64 = 0.0;
    for a in 0..n {
        for i in 0..2 * k - 1 {
            let next = &q[col(a, i + 1)];
            holonomy_residual = holonomy_residual.max(max_abs_diff(&dq[col(a, i)], next) / (1.0 + sup(next)));
        }
    }

    // Momenta series: stored for unified layouts, Legendre map otherwise.
    let mut frame = ds.new_frame();
    let p: Vec<Vec<f64>> = match layout {
        StateLayout::Unified { .. } => {
            (0..n).flat_map(|a| (0..k).map(move |l| (a, l))).map(|(a, l)| traj.momentum_series(a, l).unwrap()).collect()
        }
        StateLayout::Jet { .. } => {
            let mut cols = vec![Vec::with_capacity(len); n * k];
            for (t, state) in grid.iter().zip(traj.states()) {
                ds.load_state(&mut frame, *t, &state[..2 * k * n]);
                for (c, v) in cols.iter_mut().zip(ds.eval_momenta(&frame)?) {
                    c.push(v);
                }
            }
            cols
        }
    };
    let dp: Vec<Vec<f64>> = p.iter().map(|c| d.apply(c)).collect();

    let mut el_residual: f64 = 0.0;
    let mut momenta_residual: f64 = 0.0;
    let mut hamilton_q: f64 = 0.0;
    let mut hamilton_p: f64 = 0.0;
    let mut constraint: f64 = 0.0;
    let mut pvals = vec![0.0; n * k];
    for s in 0..len {
        for a in 0..n {
            ds.set_jet(&mut frame, a, 0, q[col(a, 0)][s]);
            for i in 1..=2 * k {
                ds.set_jet(&mut frame, a, i, dq[col(a, i - 1)][s]);
            }
        }
        frame[0] = grid[s];
        el_residual = el_residual.max(sup(&ds.eval_el(&frame)?));

        ds.load_state(&mut frame, grid[s], &traj.states()[s][..2 * k * n]);
        for (c, v) in pvals.iter_mut().enumerate() {
            *v = p[c][s];
        }
        ds.load_momenta(&mut frame, &pvals);
        let grad = ds.h_grad.eval_all(&frame)?;
        let partials = ds.eval_partials(&frame)?;
        for a in 0..n {
            for i in 0..k {
                let c = a * k + i;
                hamilton_q = hamilton_q.max(libm::fabs(dq[col(a, i)][s] - grad[momentum_index(n, k, a, i)]));
                hamilton_p = hamilton_p.max(libm::fabs(dp[c][s] + grad[jet_index(k, a, i)]));
                let mut g = partials[a * (k + 1) + i];
                if i > 0 {
                    g -= pvals[c - 1];
                }
                momenta_residual = momenta_residual.max(libm::fabs(dp[c][s] - g));
            }
        }
        if layout.is_unified() {
            let fl = ds.eval_momenta(&frame)?;
            constraint = constraint.max(max_abs_diff(&fl, &pvals));
        }
    }

    let energy_drift = if ds.autonomous() {
        let e0 = ostrogradsky_energy(ds, &traj.jet_point(0))?;
        let mut drift: f64 = 0.0;
        for s in 1..len {
            drift = drift.max(libm::fabs(ostrogradsky_energy(ds, &traj.jet_point(s))? - e0));
        }
        Some(drift)
    } else {
        None
    };

    let unified = layout.is_unified();
    let holonomic = holonomy_residual <= thresholds.holonomy;
    let mut failures = Vec::new();
    if !(el_residual <= thresholds.el) {
        failures.push("euler_lagrange".into());
    }
    if unified && !(momenta_residual <= thresholds.momenta) {
        failures.push("momenta".into());
    }
    if !(hamilton_q.max(hamilton_p) <= thresholds.hamilton) {
        failures.push("hamilton".into());
    }
    if energy_drift.is_some_and(|e| !(e <= thresholds.energy)) {
        failures.push("energy".into());
    }
    if !holonomic {
        failures.push("holonomy".into());
    }
    if unified && !(constraint <= thresholds.momenta) {
        failures.push("constraints".into());
    }
    Ok(VerificationReport {
        el_residual,
        momenta_residual: unified.then_some(momenta_residual),
        hamilton_q_residual: hamilton_q,
        hamilton_p_residual: hamilton_p,
        energy_drift,
        holonomy_residual,
        holonomic,
        constraint_residual: unified.then_some(constraint),
        thresholds: *thresholds,
        failures,
    })
}
