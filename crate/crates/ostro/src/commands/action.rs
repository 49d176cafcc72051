use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ostro_core::variational::{draw_variations, summarize_stationarity, ModulatedPath, StationarityReport, DEFAULT_EPSILON};
use ostro_core::{
    action_derivative, discrete_action, fit_path, Basis, Curve, Integrand, PathRepresentation, Polynomial,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{emit, load_spec, read_csv, read_json, to_json};
use crate::Global;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BasisArg {
    Monomial,
    Fourier,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["traj", "path"]))]
pub struct ActionArgs {
    /// System definition (JSON).
    pub spec: PathBuf,
    /// Trajectory CSV; its `q_0` samples are fitted in `--basis`.
    #[arg(long)]
    pub traj: Option<PathBuf>,
    /// Path document (JSON): `basis`, `coefficients`, `interval` and an
    /// optional polynomial `envelope` multiplying the path.
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub variations: u32,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = BasisArg::Fourier)]
    pub basis: BasisArg,
    /// Fundamental frequency of the Fourier basis.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Number of basis functions in the fit.
    #[arg(long, default_value_t = 9)]
    pub coeffs: usize,
    /// Simpson quadrature points.
    #[arg(long, default_value_t = 2000)]
    pub quad_points: usize,
}

#[derive(Deserialize)]
struct PathDocument {
    #[serde(flatten)]
    path: PathRepresentation,
    #[serde(default)]
    envelope: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct FitSummary {
    basis: Basis,
    coefficients: Vec<Vec<f64>>,
    q0_residual: f64,
    derivative_residuals: Vec<f64>,
    used_qr: bool,
}

#[derive(Serialize)]
struct ActionReport {
    system: String,
    interval: (f64, f64),
    variations: usize,
    fit: Option<FitSummary>,
    pass: bool,
    stationarity: StationarityReport,
    action_lagrangian: f64,
    action_cartan: f64,
    action_difference: f64,
    actions_agree: bool,
}

enum Source {
    Plain(PathRepresentation),
    Modulated(ModulatedPath),
}

impl Source {
    fn curve(&self) -> &(dyn Curve + Sync) {
        match self {
            Source::Plain(p) => p,
            Source::Modulated(m) => m,
        }
    }
}

fn load_path(path: &std::path::Path, dofs: usize) -> Result<Source, CliError> {
    let doc: PathDocument = read_json(path)?;
    let p = doc.path;
    let (a, b) = p.interval;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(CliError::input(format!("{}: interval must satisfy a < b", path.display())));
    }
    if p.coefficients.len() != dofs || p.coefficients.iter().any(|c| c.is_empty()) {
        return Err(CliError::input(format!("{}: need one non-empty coefficient list per dof ({dofs})", path.display())));
    }
    Ok(match doc.envelope {
        Some(e) => Source::Modulated(ModulatedPath { envelope: Polynomial(e), path: p }),
        None => Source::Plain(p),
    })
}

pub fn run(args: &ActionArgs, global: &Global) -> Result<bool, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::input("--tol must be positive"));
    }
    if args.quad_points < 2 {
        return Err(CliError::input("--quad-points must be at least 2"));
    }
    let loaded = load_spec(&args.spec)?;
    let ds = &loaded.ds;
    let (n, k) = (ds.dofs(), ds.order());
    let mut fit = None;
    let source = match (&args.traj, &args.path) {
        (Some(traj), _) => {
            let traj = read_csv(traj, n, k)?;
            let basis = match args.basis {
                BasisArg::Monomial => Basis::Monomial,
                BasisArg::Fourier => Basis::Fourier { omega: args.omega },
            };
            let r = fit_path(&traj, basis, args.coeffs).map_err(|e| CliError::input(format!("fit: {e}")))?;
            log::info!("fit residual {:e} ({} coefficients)", r.q0_residual, args.coeffs);
            fit = Some(FitSummary {
                basis,
                coefficients: r.path.coefficients.clone(),
                q0_residual: r.q0_residual,
                derivative_residuals: r.derivative_residuals,
                used_qr: r.used_qr,
            });
            Source::Plain(r.path)
        }
        (None, Some(path)) => load_path(path, n)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let curve = source.curve();
    let eval_err = |e: ostro_core::EvalError| CliError::Runtime { message: e.to_string(), last_good: None };
    let action = discrete_action(ds, curve, Integrand::Lagrangian, args.quad_points).map_err(eval_err)?;
    let cartan = discrete_action(ds, curve, Integrand::Cartan, args.quad_points).map_err(eval_err)?;
    let variations = draw_variations(curve.interval(), n, k, args.variations as usize, global.seed);
    let derivatives = variations
        .par_iter()
        .map(|v| action_derivative(ds, curve, v, DEFAULT_EPSILON, args.quad_points))
        .collect::<Result<Vec<_>, _>>()
        .map_err(eval_err)?;
    let stationarity = summarize_stationarity(action, &variations, derivatives, args.tol);
    let difference = (action - cartan).abs();
    let actions_agree = difference <= 1e-9 * (1.0 + action.abs());
    if !actions_agree {
        log::warn!("Lagrangian and Cartan actions differ by {difference:e}");
    }
    let report = ActionReport {
        system: loaded.spec.name.clone(),
        interval: curve.interval(),
        variations: variations.len(),
        fit,
        pass: stationarity.pass,
        stationarity,
        action_lagrangian: action,
        action_cartan: cartan,
        action_difference: difference,
        actions_agree,
    };
    emit(&to_json(&report, global.pretty), global.out.as_deref())?;
    Ok(report.pass && actions_agree)
}
