use std::path::PathBuf;

use clap::Args;
use ostro_core::legendre::DerivedSystem;
use ostro_core::unified::{constraint_violation, h_hat_value};
use ostro_core::{
    constraint_residuals, coupling, explicit_semispray, hamiltonian_section_p, kernel_check, legendre_map,
    solve_unified_vf, JetPoint, UnifiedError, UnifiedPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::io::{emit, load_spec, parse_box, parse_vector, to_json};
use crate::Global;

/// Largest solver-vs-formula difference and kernel residual accepted.
const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["point", "random"]))]
pub struct UnifiedArgs {
    /// System definition (JSON).
    pub spec: PathBuf,
    /// Coordinates `t, q.., p^i..` of W_r (`3kn + 1` values), or
    /// `t, q.., p, p^i..` of W with `--extended`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long, requires = "point")]
    pub extended: bool,
    /// Check this many seeded random points of the constraint submanifold.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub random: Option<u32>,
    /// Box `lo,hi` the random jets are drawn from.
    #[arg(long = "box", default_value = "-1,1", allow_hyphen_values = true)]
    pub sample_box: String,
}

#[derive(Serialize)]
struct PointReport {
    point: Vec<f64>,
    constraint_residuals: Vec<Vec<f64>>,
    max_constraint_residual: f64,
    constraint_tolerance: f64,
    on_constraint: bool,
    h_hat: f64,
    hamiltonian_section_p: f64,
    coupling: Option<f64>,
    kernel_solve: Option<Vec<f64>>,
    explicit_semispray: Option<Vec<f64>>,
    solver_formula_diff: Option<f64>,
    kernel_residual: Option<f64>,
    transversality: Option<f64>,
    error: Option<String>,
    pass: bool,
}

#[derive(Serialize)]
struct Report {
    system: String,
    points: usize,
    passed: usize,
    max_solver_formula_diff: Option<f64>,
    max_kernel_residual: Option<f64>,
    results: Vec<PointReport>,
}

enum Outcome {
    Done(PointReport),
    Singular(PointReport),
}

fn check_point(ds: &DerivedSystem, up: &UnifiedPoint) -> Result<Outcome, CliError> {
    let eval_err = |e: ostro_core::EvalError| CliError::Runtime { message: e.to_string(), last_good: None };
    let levels = constraint_residuals(ds, up).map_err(eval_err)?;
    let (residual, tolerance) = constraint_violation(ds, up).map_err(eval_err)?;
    let mut r = PointReport {
        point: up.coordinates(),
        constraint_residuals: levels,
        max_constraint_residual: residual,
        constraint_tolerance: tolerance,
        on_constraint: residual <= tolerance,
        h_hat: h_hat_value(ds, up).map_err(eval_err)?,
        hamiltonian_section_p: hamiltonian_section_p(ds, up).map_err(eval_err)?,
        coupling: up.p_ext.map(|_| coupling(up).expect("extended point")),
        kernel_solve: None,
        explicit_semispray: None,
        solver_formula_diff: None,
        kernel_residual: None,
        transversality: None,
        error: None,
        pass: false,
    };
    if !r.on_constraint {
        r.error = Some(format!("off the constraint submanifold (residual {residual:e} > {tolerance:e})"));
        return Ok(Outcome::Done(r));
    }
    let solved = solve_unified_vf(ds, up).and_then(|x| Ok((explicit_semispray(ds, up)?, x)));
    match solved {
        Ok((y, x)) => {
            let k = kernel_check(ds, up, &x).map_err(eval_err)?;
            let diff = x.max_abs_diff(&y);
            r.pass = diff <= AGREEMENT_TOL && k.residual <= AGREEMENT_TOL && k.transversality == 1.0;
            r.solver_formula_diff = Some(diff);
            r.kernel_residual = Some(k.residual);
            r.transversality = Some(k.transversality);
            r.kernel_solve = Some(x.components);
            r.explicit_semispray = Some(y.components);
            Ok(Outcome::Done(r))
        }
        Err(e @ UnifiedError::SingularHessian { .. }) => {
            r.error = Some(e.to_string());
            Ok(Outcome::Singular(r))
        }
        Err(e) => Err(CliError::Runtime { message: e.to_string(), last_good: None }),
    }
}

fn random_points(ds: &DerivedSystem, count: usize, (lo, hi): (f64, f64), seed: u64) -> Result<Vec<UnifiedPoint>, CliError> {
    let (n, k) = (ds.dofs(), ds.order());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(lo..hi);
            let values = (0..2 * k * n).map(|_| rng.gen_range(lo..hi)).collect();
            let jet = JetPoint::new(t, n, 2 * k, values);
            let p = legendre_map(ds, &jet).map_err(|e| CliError::Runtime { message: e.to_string(), last_good: None })?;
            Ok(UnifiedPoint::new(jet, p, None))
        })
        .collect()
}

pub fn run(args: &UnifiedArgs, global: &Global) -> Result<bool, CliError> {
    let loaded = load_spec(&args.spec)?;
    let ds = &loaded.ds;
    let (n, k) = (ds.dofs(), ds.order());
    let points = match (&args.point, args.random) {
        (Some(text), _) => {
            let x = parse_vector(text)?;
            let up = UnifiedPoint::from_coordinates(&x, n, k, args.extended).ok_or_else(|| {
                let want = 3 * k * n + 1 + usize::from(args.extended);
                CliError::input(format!("--point needs {want} values, got {}", x.len()))
            })?;
            vec![up]
        }
        (None, Some(count)) => random_points(ds, count as usize, parse_box(&args.sample_box)?, global.seed)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let outcomes = points.par_iter().map(|up| check_point(ds, up)).collect::<Result<Vec<_>, _>>()?;
    let mut singular = false;
    let results: Vec<PointReport> = outcomes
        .into_iter()
        .map(|o| match o {
            Outcome::Done(r) => r,
            Outcome::Singular(r) => {
                singular = true;
                r
            }
        })
        .collect();
    let max_of = |f: fn(&PointReport) -> Option<f64>| results.iter().filter_map(f).reduce(f64::max);
    let report = Report {
        system: loaded.spec.name.clone(),
        points: results.len(),
        passed: results.iter().filter(|r| r.pass).count(),
        max_solver_formula_diff: max_of(|r| r.solver_formula_diff),
        max_kernel_residual: max_of(|r| r.kernel_residual),
        results,
    };
    emit(&to_json(&report, global.pretty), global.out.as_deref())?;
    if singular {
        return Err(CliError::Runtime { message: "singular Hessian at a checked point".into(), last_good: None });
    }
    Ok(report.passed == report.points)
}
