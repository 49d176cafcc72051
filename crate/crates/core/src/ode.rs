//! Explicit Runge–Kutta integrators: classic fixed-step RK4 and adaptive
//! Runge–Kutta–Fehlberg 4(5).

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "method", rename_all = "lowercase"))]
pub enum Method {
    Rk4 { step: f64 },
    /// Error per step is kept below `atol + rtol |y|` component-wise.
    Rkf45 { atol: f64, rtol: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 { .. } => "rk4",
            Method::Rkf45 { .. } => "rkf45",
        }
    }

    /// Nominal accuracy used to scale verification thresholds.
    pub fn tolerance(&self) -> f64 {
        match self {
            Method::Rk4 { step } => libm::pow(*step, 4.0),
            Method::Rkf45 { atol, rtol } => libm::fmax(*atol, *rtol),
        }
    }
}

impl Default for Method {
    fn default() -> Self {
        Method::Rkf45 { atol: 1e-9, rtol: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorOptions {
    pub method: Method,
    /// With RKF45, steps are shortened to land on every multiple of
    /// `output_dt` and only those points are recorded. Ignored by RK4.
    pub output_dt: Option<f64>,
    pub max_steps: usize,
    /// Smallest step RKF45 may take before giving up.
    pub min_step: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { method: Method::default(), output_dt: None, max_steps: 1_000_000, min_step: 1e-14 }
    }
}

impl IntegratorOptions {
    pub fn rk4(step: f64) -> Self {
        IntegratorOptions { method: Method::Rk4 { step }, ..Default::default() }
    }

    pub fn rkf45(atol: f64, rtol: f64) -> Self {
        IntegratorOptions { method: Method::Rkf45 { atol, rtol }, ..Default::default() }
    }

    pub fn with_output_dt(mut self, dt: f64) -> Self {
        self.output_dt = Some(dt);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeError<E> {
    /// The right-hand side failed; `t` and `state` are the last accepted
    /// values.
    Rhs { t: f64, state: Vec<f64>, error: E },
    StepUnderflow { t: f64, step: f64 },
    MaxSteps { t: f64 },
    InvalidOptions(&'static str),
}

/// Grid, states and statistics of an integration run.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub grid: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t_end`. `f` writes the
/// derivative into its output slice.
pub fn solve<E, F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, opts: &IntegratorOptions) -> Result<Solution, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    if !(t_end > t0) {
        return Err(OdeError::InvalidOptions("t_end must exceed the initial time"));
    }
    match opts.method {
        Method::Rk4 { step } if step > 0.0 && step.is_finite() => rk4(&mut f, t0, y0, t_end, step, opts),
        Method::Rk4 { .. } => Err(OdeError::InvalidOptions("RK4 step must be positive")),
        Method::Rkf45 { atol, rtol } if atol >= 0.0 && rtol >= 0.0 && atol + rtol > 0.0 => {
            rkf45(&mut f, t0, y0, t_end, atol, rtol, opts)
        }
        Method::Rkf45 { .. } => Err(OdeError::InvalidOptions("RKF45 tolerances must be non-negative, not both zero")),
    }
}

fn rk4<E, F>(f: &mut F, t0: f64, y0: &[f64], t_end: f64, step: f64, opts: &IntegratorOptions) -> Result<Solution, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    let n = y0.len();
    // Steps of equal length; the last one lands on `t_end` exactly.
    let steps = libm::ceil((t_end - t0) / step * (1.0 - 1e-12)).max(1.0) as usize;
    if steps > opts.max_steps {
        return Err(OdeError::MaxSteps { t: t0 });
    }
    let mut sol = Solution { grid: vec![t0], states: vec![y0.to_vec()], stats: StepStats::default() };
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 0..steps {
        let t = t0 + s as f64 * step;
        let t_next = if s + 1 == steps { t_end } else { t0 + (s + 1) as f64 * step };
        let h = t_next - t;
        let fail = |error, y: &[f64]| OdeError::Rhs { t, state: y.to_vec(), error };
        f(t, &y, &mut k1).map_err(|e| fail(e, &y))?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2).map_err(|e| fail(e, &y))?;
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3).map_err(|e| fail(e, &y))?;
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4).map_err(|e| fail(e, &y))?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        sol.stats.rhs_evals += 4;
        sol.stats.accepted += 1;
        sol.grid.push(t_next);
        sol.states.push(y.clone());
    }
    Ok(sol)
}

// Fehlberg tableau.
const C: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
/// Step-size controller safety factor.
const SAFETY: f64 = 0.8;

fn rkf45<E, F>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    atol: f64,
    rtol: f64,
    opts: &IntegratorOptions,
) -> Result<Solution, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    let n = y0.len();
    let mut sol = Solution { grid: vec![t0], states: vec![y0.to_vec()], stats: StepStats::default() };
    let mut y = y0.to_vec();
    let mut t = t0;
    let span = t_end - t0;
    let mut h = libm::fmin(span, 0.01 * span.max(1.0)) * libm::pow(atol + rtol, 0.2).min(1.0);
    h = h.max(opts.min_step);
    let mut k = vec![vec![0.0; n]; 6];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let output_dt = opts.output_dt.filter(|d| *d > 0.0);
    let mut next_output = output_dt.map(|d| (1usize, t0 + d));

    while t < t_end {
        if sol.stats.accepted + sol.stats.rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps { t });
        }
        let mut target = t_end;
        if let Some((_, to)) = next_output {
            target = target.min(to);
        }
        let mut landing = false;
        let mut h_try = h;
        if t + h_try >= target || (target - t - h_try) < 1e-12 * span {
            h_try = target - t;
            landing = true;
        }
        for s in 0..6 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h_try * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            f(t + C[s] * h_try, &tmp, &mut k[s]).map_err(|error| OdeError::Rhs { t, state: y.clone(), error })?;
        }
        sol.stats.rhs_evals += 6;
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut s5 = y[i];
            let mut d = 0.0;
            for s in 0..6 {
                s5 += h_try * B5[s] * k[s][i];
                d += h_try * (B5[s] - B4[s]) * k[s][i];
            }
            y5[i] = s5;
            let scale = atol + rtol * libm::fmax(libm::fabs(y[i]), libm::fabs(s5));
            err = err.max(libm::fabs(d) / scale);
        }
        if err <= 1.0 {
            t = if landing { target } else { t + h_try };
            y.copy_from_slice(&y5);
            sol.stats.accepted += 1;
            let record = match next_output {
                None => true,
                Some((m, to)) if landing && target == to => {
                    next_output = output_dt.map(|d| (m + 1, t0 + (m + 1) as f64 * d));
                    true
                }
                Some(_) => t >= t_end,
            };
            if record && *sol.grid.last().unwrap() < t {
                sol.grid.push(t);
                sol.states.push(y.clone());
            }
            let factor = if err == 0.0 { 5.0 } else { (SAFETY * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
            // A step shortened to land on an output time says little about
            // the natural step size.
            h = if landing { h.max(h_try * factor) } else { h_try * factor };
        } else {
            sol.stats.rejected += 1;
            let factor = if err.is_finite() { (SAFETY * libm::pow(err, -0.2)).clamp(0.1, 0.5) } else { 0.1 };
            h = h_try * factor;
            if h < opts.min_step {
                return Err(OdeError::StepUnderflow { t, step: h });
            }
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], out: &mut [f64]) -> Result<(), ()> {
        out[0] = y[1];
        out[1] = -y[0];
        Ok(())
    }

    #[test]
    fn rk4_exact_on_linear_solutions() {
        let sol = solve(|_, _: &[f64], out: &mut [f64]| -> Result<(), ()> {
            out[0] = 1.0;
            Ok(())
        }, 0.0, &[0.0], 2.0, &IntegratorOptions::rk4(0.1))
        .unwrap();
        assert_eq!(sol.grid.len(), 21);
        assert_eq!(*sol.grid.last().unwrap(), 2.0);
        assert!((sol.states.last().unwrap()[0] - 2.0).abs() <= 1e-14);
    }

    #[test]
    fn rkf45_oscillator_accuracy() {
        let sol = solve(oscillator, 0.0, &[1.0, 0.0], 10.0, &IntegratorOptions::rkf45(1e-10, 1e-10)).unwrap();
        let y = sol.states.last().unwrap();
        assert_eq!(*sol.grid.last().unwrap(), 10.0);
        assert!((y[0] - libm::cos(10.0)).abs() < 1e-8);
        assert!((y[1] + libm::sin(10.0)).abs() < 1e-8);
    }

    #[test]
    fn rkf45_output_grid() {
        let sol =
            solve(oscillator, 0.0, &[1.0, 0.0], 1.0, &IntegratorOptions::rkf45(1e-9, 1e-9).with_output_dt(0.1)).unwrap();
        assert_eq!(sol.grid.len(), 11);
        for (i, t) in sol.grid.iter().enumerate() {
            assert!((t - 0.1 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_convergence_order() {
        let err = |h: f64| {
            let sol = solve(oscillator, 0.0, &[1.0, 0.0], 2.0, &IntegratorOptions::rk4(h)).unwrap();
            (sol.states.last().unwrap()[0] - libm::cos(2.0)).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((8.0..32.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rhs_failure_reports_last_state() {
        let r = solve(
            |t, _: &[f64], out: &mut [f64]| {
                out[0] = 1.0;
                if t > 0.5 { Err("boom") } else { Ok(()) }
            },
            0.0,
            &[0.0],
            1.0,
            &IntegratorOptions::rk4(0.1),
        );
        match r {
            Err(OdeError::Rhs { t, state, error }) => {
                assert!(t <= 0.5 + 1e-12 && (state[0] - t).abs() < 1e-12 && error == "boom");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            solve(oscillator, 0.0, &[1.0, 0.0], 1.0, &IntegratorOptions::rk4(-1.0)),
            Err(OdeError::InvalidOptions(_))
        ));
    }
}
