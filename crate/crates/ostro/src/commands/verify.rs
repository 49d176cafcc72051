use std::path::PathBuf;

use clap::Args;
use ostro_core::{verify_trajectory, StateLayout, VerificationReport, VerifyThresholds};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{emit, load_spec, read_csv, to_json};
use crate::Global;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// System definition (JSON).
    pub spec: PathBuf,
    /// Trajectory CSV written by `simulate`.
    #[arg(long)]
    pub traj: PathBuf,
    /// Integrator tolerance the thresholds are scaled from.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Serialize)]
struct Report {
    system: String,
    layout: StateLayout,
    points: usize,
    passed: bool,
    #[serde(flatten)]
    report: VerificationReport,
}

pub fn run(args: &VerifyArgs, global: &Global) -> Result<bool, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::input("--tol must be positive"));
    }
    let loaded = load_spec(&args.spec)?;
    let ds = &loaded.ds;
    let traj = read_csv(&args.traj, ds.dofs(), ds.order())?;
    let report = verify_trajectory(ds, &traj, &VerifyThresholds::for_tolerance(args.tol))
        .map_err(|e| CliError::Runtime { message: e.to_string(), last_good: None })?;
    let passed = report.passed();
    for f in &report.failures {
        log::warn!("check failed: {f}");
    }
    let out = Report { system: loaded.spec.name.clone(), layout: traj.layout(), points: traj.len(), passed, report };
    emit(&to_json(&out, global.pretty), global.out.as_deref())?;
    Ok(passed)
}
