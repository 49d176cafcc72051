use std::path::PathBuf;

use clap::Args;
use ostro_core::{regularity_report, simplify, Expr, SampleBox};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{emit, load_spec, parse_box, to_json};
use crate::Global;

#[derive(Args, Debug)]
pub struct DeriveArgs {
    /// System definition (JSON).
    pub spec: PathBuf,
    /// Sample box `lo,hi` for the regularity scan.
    #[arg(long = "box", default_value = "-2,2", allow_hyphen_values = true)]
    pub sample_box: String,
    /// Number of random points in the regularity scan.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Serialize)]
struct Momentum {
    dof: usize,
    level: usize,
    expr: String,
}

#[derive(Serialize)]
struct WorstPoint {
    t: f64,
    q: Vec<f64>,
}

#[derive(Serialize)]
struct Regularity {
    verdict: &'static str,
    min_abs_det: f64,
    rank_at_worst: usize,
    singular_values: Vec<f64>,
    det_sign_change: bool,
    samples: usize,
    worst_point: WorstPoint,
}

#[derive(Serialize)]
struct DerivationReport {
    system: String,
    order: usize,
    dofs: usize,
    autonomous: bool,
    lagrangian: String,
    momenta: Vec<Momentum>,
    euler_lagrange: Vec<String>,
    hessian: Vec<Vec<String>>,
    hessian_det: String,
    h_hat: String,
    regularity: Regularity,
    warning: bool,
    warnings: Vec<String>,
}

/// Cofactor expansion along the first row.
fn determinant(m: &[Expr], n: usize) -> Expr {
    if n == 1 {
        return m[0].clone();
    }
    let mut terms = Vec::with_capacity(n);
    for j in 0..n {
        let minor: Vec<Expr> =
            (1..n).flat_map(|r| (0..n).filter(move |c| *c != j).map(move |c| (r, c))).map(|(r, c)| m[r * n + c].clone()).collect();
        let term = Expr::product(vec![m[j].clone(), determinant(&minor, n - 1)]);
        terms.push(if j % 2 == 0 { term } else { -term });
    }
    Expr::sum(terms)
}

pub fn run(args: &DeriveArgs, global: &Global) -> Result<bool, CliError> {
    let loaded = load_spec(&args.spec)?;
    let ds = &loaded.ds;
    let (n, k) = (ds.dofs(), ds.order());
    let show = |e: &Expr| e.display(n).to_string();
    let (lo, hi) = parse_box(&args.sample_box)?;
    if args.samples == 0 {
        return Err(CliError::input("--samples must be at least 1"));
    }
    let r = regularity_report(ds, &SampleBox::uniform(lo, hi), args.samples, global.seed)
        .map_err(|e| CliError::input(format!("regularity scan: {e}")))?;
    let det = simplify(&determinant(ds.hessian(), n));
    let mut warnings = Vec::new();
    if !r.regular {
        warnings.push(format!(
            "Hessian is singular in the sampled box (min |det W| = {:e}, rank {} of {n}); dynamics commands will refuse this system there",
            r.min_abs_det, r.rank_at_worst
        ));
    }
    if r.det_sign_change {
        warnings.push("det W changes sign in the sampled box".into());
    }
    let report = DerivationReport {
        system: loaded.spec.name.clone(),
        order: k,
        dofs: n,
        autonomous: ds.autonomous(),
        lagrangian: show(ds.lagrangian()),
        momenta: (0..n)
            .flat_map(|a| (0..k).map(move |l| (a, l)))
            .map(|(a, l)| Momentum { dof: a + 1, level: l, expr: show(ds.momentum(a, l)) })
            .collect(),
        euler_lagrange: ds.euler_lagrange().iter().map(show).collect(),
        hessian: ds.hessian().chunks(n).map(|row| row.iter().map(show).collect()).collect(),
        hessian_det: show(&det),
        h_hat: show(ds.h_hat()),
        regularity: Regularity {
            verdict: if r.regular { "regular" } else { "singular" },
            min_abs_det: r.min_abs_det,
            rank_at_worst: r.rank_at_worst,
            singular_values: r.singular_values.clone(),
            det_sign_change: r.det_sign_change,
            samples: r.samples,
            worst_point: WorstPoint { t: r.worst_point.t, q: r.worst_point.values().to_vec() },
        },
        warning: !warnings.is_empty(),
        warnings,
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    emit(&to_json(&report, global.pretty), global.out.as_deref())?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ostro_core::{eval, Var};

    #[test]
    fn determinant_of_two_by_two() {
        let m: Vec<Expr> = (0..4).map(|i| Expr::jet(0, i)).collect();
        let d = determinant(&m, 2);
        let at: Vec<(Var, f64)> = (0..4).map(|i| (Var::jet(0, i), [2.0, 3.0, 5.0, 7.0][i])).collect();
        assert_eq!(eval(&d, at.as_slice()).unwrap(), 2.0 * 7.0 - 3.0 * 5.0);
    }

    #[test]
    fn determinant_of_three_by_three() {
        let vals = [2.0, -1.0, 0.0, 1.0, 3.0, 4.0, 0.5, 2.0, 1.0];
        let m: Vec<Expr> = vals.iter().map(|v| Expr::constant(*v)).collect();
        let d = eval(&determinant(&m, 3), [].as_slice()).unwrap();
        // Rule of Sarrus.
        let s = 2.0 * 3.0 * 1.0 - 4.0 * 0.5 + 0.0 - 0.0 - 2.0 * 4.0 * 2.0 + 1.0;
        assert!((d - s).abs() < 1e-12);
    }
}
