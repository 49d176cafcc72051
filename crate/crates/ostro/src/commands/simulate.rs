use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ostro_core::ode::StepStats;
use ostro_core::{
    integrate, integrate_unified, verify_trajectory, IntegratorOptions, JetPoint, Method, StateLayout, UnifiedPoint,
    VerificationReport, VerifyThresholds,
};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{load_spec, parse_vector, to_json, write_csv};
use crate::Global;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Rkf45,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// System definition (JSON).
    pub spec: PathBuf,
    /// Initial state: `q_0..q_{2k-1}` per dof, followed by `p^0..p^{k-1}`
    /// per dof with `--unified`.
    #[arg(long, allow_hyphen_values = true)]
    pub init: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long)]
    pub t_end: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Rkf45)]
    pub method: MethodArg,
    /// Absolute and relative tolerance for rkf45.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Step for rk4.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Output grid spacing for rkf45 (default: accepted steps).
    #[arg(long)]
    pub output_dt: Option<f64>,
    /// Integrate jets and momenta together from a point on the constraint
    /// submanifold.
    #[arg(long)]
    pub unified: bool,
}

#[derive(Serialize)]
struct Summary {
    system: String,
    layout: StateLayout,
    method: Method,
    t0: f64,
    t_end: f64,
    points: usize,
    stats: StepStats,
    final_state: Vec<f64>,
    energy_drift: Option<f64>,
    max_constraint_residual: Option<f64>,
    verification: VerificationReport,
}

pub fn run(args: &SimulateArgs, global: &Global) -> Result<bool, CliError> {
    let loaded = load_spec(&args.spec)?;
    let ds = &loaded.ds;
    let (n, k) = (ds.dofs(), ds.order());
    let init = parse_vector(&args.init)?;
    let method = match args.method {
        MethodArg::Rk4 => Method::Rk4 { step: args.step },
        MethodArg::Rkf45 => Method::Rkf45 { atol: args.tol, rtol: args.tol },
    };
    let mut opts = IntegratorOptions { method, ..IntegratorOptions::default() };
    if let Some(dt) = args.output_dt {
        opts = opts.with_output_dt(dt);
    }
    let traj = if args.unified {
        if init.len() != 3 * k * n {
            return Err(CliError::input(format!("--init needs 3kn = {} values with --unified, got {}", 3 * k * n, init.len())));
        }
        let jet = JetPoint::new(args.t0, n, 2 * k, init[..2 * k * n].to_vec());
        let up = UnifiedPoint::new(jet, init[2 * k * n..].to_vec(), None);
        integrate_unified(ds, &up, args.t_end, &opts)?
    } else {
        if init.len() != 2 * k * n {
            return Err(CliError::input(format!("--init needs 2kn = {} values, got {}", 2 * k * n, init.len())));
        }
        integrate(ds, &JetPoint::new(args.t0, n, 2 * k, init), args.t_end, &opts)?
    };
    let meta = traj.meta.expect("integrators fill metadata");
    let thresholds = VerifyThresholds::for_tolerance(method.tolerance());
    let verification =
        verify_trajectory(ds, &traj, &thresholds).map_err(|e| CliError::Runtime { message: e.to_string(), last_good: None })?;
    let summary = Summary {
        system: loaded.spec.name.clone(),
        layout: traj.layout(),
        method,
        t0: args.t0,
        t_end: args.t_end,
        points: traj.len(),
        stats: meta.stats,
        final_state: traj.states().last().cloned().unwrap_or_default(),
        energy_drift: verification.energy_drift,
        max_constraint_residual: meta.max_constraint_residual,
        verification,
    };
    let text = to_json(&summary, global.pretty);
    let io_err = |e: io::Error| CliError::input(format!("writing output: {e}"));
    match &global.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            write_csv(&traj, BufWriter::new(file))?;
            io::stdout().write_all(text.as_bytes()).map_err(io_err)?;
        }
        None => {
            write_csv(&traj, io::stdout().lock())?;
            io::stderr().write_all(text.as_bytes()).map_err(io_err)?;
        }
    }
    Ok(true)
}
