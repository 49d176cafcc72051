//! End-to-end runs of the `ostro` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ostro_core::legendre::DerivedSystem;
use ostro_core::{build_system, equivalent_numeric, parse, Expr, ParseContext, SampleBox, SystemSpec};
use serde_json::Value;
use tempfile::TempDir;

fn systems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems")
}

fn system(name: &str) -> String {
    systems().join(format!("{name}.json")).to_string_lossy().into_owned()
}

fn ostro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ostro")).args(args).env("OSTRO_LOG", "error").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Simulates PU from the jet of `cos t` into `dir/name`.
fn pu_trajectory(dir: &TempDir, name: &str, t_end: &str, output_dt: &str) -> String {
    let csv = dir.path().join(name).to_string_lossy().into_owned();
    let out = ostro(&[
        "simulate", &system("pais_uhlenbeck"), "--init", "1,0,-1,0", "--t-end", t_end, "--output-dt", output_dt,
        "--out", &csv,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    csv
}

#[test]
fn derive_pais_uhlenbeck() {
    let out = ostro(&["derive", &system("pais_uhlenbeck")]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["euler_lagrange"][0], "q4 + 5*q2 + 4*q0");
    assert_eq!(r["hessian_det"], "1");
    assert_eq!(r["regularity"]["verdict"], "regular");
    assert_eq!(r["warning"], false);
}

#[test]
fn derive_harmonic() {
    let r = json(&ostro(&["derive", &system("harmonic")]));
    assert_eq!(r["momenta"][0]["expr"], "q1");
    assert_eq!(r["regularity"]["verdict"], "regular");
}

#[test]
fn derive_degenerate_warns_but_succeeds() {
    let out = ostro(&["derive", &system("degenerate")]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["regularity"]["verdict"], "singular");
    assert_eq!(r["regularity"]["rank_at_worst"], 0);
    assert_eq!(r["hessian_det"], "0");
    assert_eq!(r["warning"], true);
}

#[test]
fn derived_expressions_reparse() {
    for entry in std::fs::read_dir(systems()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let spec: SystemSpec = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let ds = DerivedSystem::new(&build_system(&spec).unwrap());
        let r = json(&ostro(&["derive", path.to_str().unwrap()]));
        let ctx = ParseContext::unified(spec.order, spec.dofs, &[]);
        let same = |text: &Value, e: &Expr| {
            let back = parse(text.as_str().unwrap(), &ctx).unwrap();
            let box_ = SampleBox::uniform(-1.0, 1.0).with(ostro_core::Var::Time, 0.0, 0.9);
            assert!(equivalent_numeric(&back, e, &box_, 50, 1e-12, 1).unwrap().equivalent, "{}: {text}", spec.name);
        };
        same(&r["lagrangian"], ds.lagrangian());
        same(&r["h_hat"], ds.h_hat());
        for (a, el) in ds.euler_lagrange().iter().enumerate() {
            same(&r["euler_lagrange"][a], el);
        }
        for (i, m) in ds.momenta().iter().enumerate() {
            same(&r["momenta"][i]["expr"], m);
        }
        for (i, w) in ds.hessian().iter().enumerate() {
            same(&r["hessian"][i / spec.dofs][i % spec.dofs], w);
        }
    }
}

#[test]
fn invalid_specs_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "bad", "order": 2, "dofs": 1, "lagrangian": "q3^2", "autonomous": true}"#).unwrap();
    let out = ostro(&["derive", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("exceeds"), "{}", stderr(&out));
    assert_eq!(code(&ostro(&["derive", "/nonexistent/spec.json"])), 2);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&ostro(&["derive", bad.to_str().unwrap()])), 2);
}

#[test]
fn simulate_and_verify_pais_uhlenbeck() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("pu.csv");
    let out = ostro(&[
        "simulate", &system("pais_uhlenbeck"), "--init", "1,0,-1,0", "--t-end", "10", "--output-dt", "0.01", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let summary = json(&out);
    assert!(summary["energy_drift"].as_f64().unwrap() <= 1e-7);
    assert_eq!(summary["verification"]["failures"], Value::Array(vec![]));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,q_0_1,q_1_1,q_2_1,q_3_1\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1002);
    let verify = ostro(&["verify", &system("pais_uhlenbeck"), "--traj", csv.to_str().unwrap()]);
    assert_eq!(code(&verify), 0, "{}", String::from_utf8_lossy(&verify.stdout));
    assert_eq!(json(&verify)["passed"], true);
}

#[test]
fn simulate_free_particle_rk4_is_exact() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("fp.csv");
    let out = ostro(&[
        "simulate", &system("free_particle"), "--init", "0,1", "--t-end", "1", "--method", "rk4", "--step", "0.1",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["final_state"][0].as_f64().unwrap(), 1.0);
    let last = std::fs::read_to_string(&csv).unwrap().lines().last().unwrap().to_string();
    assert!(last.starts_with("1.0000000000000000e0,1.0000000000000000e0,"), "{last}");
}

#[test]
fn simulate_rejects_bad_initial_data() {
    let pu = system("pais_uhlenbeck");
    let off = ostro(&["simulate", &pu, "--init", "1,0,-1,0,0,-0.5", "--t-end", "1", "--unified"]);
    assert_eq!(code(&off), 2);
    assert!(stderr(&off).contains("residual"), "{}", stderr(&off));
    assert_eq!(code(&ostro(&["simulate", &pu, "--init", "1,0,-1", "--t-end", "1"])), 2);
    assert_eq!(code(&ostro(&["simulate", &pu, "--init", "1,0,-1,x", "--t-end", "1"])), 2);
}

#[test]
fn simulate_unified_stays_on_the_constraints() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("u.csv");
    let out = ostro(&[
        "simulate", &system("pais_uhlenbeck"), "--init", "1,0,-1,0,0,-1", "--t-end", "10", "--output-dt", "0.01",
        "--unified", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["max_constraint_residual"].as_f64().unwrap() <= 1e-7);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,q_0_1,q_1_1,q_2_1,q_3_1,p_0_1,p_1_1\n"));
    let verify = ostro(&["verify", &system("pais_uhlenbeck"), "--traj", csv.to_str().unwrap()]);
    assert_eq!(code(&verify), 0);
}

#[test]
fn singular_hessian_mid_run_exits_3() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("x.csv");
    let out = ostro(&[
        "simulate", &system("fading_mass"), "--init", "0,0", "--t-end", "2", "--method", "rk4", "--step", "0.1", "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("last good time: 0.9"), "{}", stderr(&out));
}

#[test]
fn verify_rejects_malformed_and_flags_perturbed() {
    let dir = TempDir::new().unwrap();
    let csv = pu_trajectory(&dir, "pu.csv", "10", "0.01");
    let text = std::fs::read_to_string(&csv).unwrap();
    let pu = system("pais_uhlenbeck");

    let dropped: String = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    let bad = dir.path().join("dropped.csv");
    std::fs::write(&bad, dropped).unwrap();
    assert_eq!(code(&ostro(&["verify", &pu, "--traj", bad.to_str().unwrap()])), 2);

    let mut lines = text.lines();
    let mut ragged = format!("{}\n", lines.next().unwrap());
    ragged.push_str("0.0,1.0\n");
    std::fs::write(&bad, ragged).unwrap();
    assert_eq!(code(&ostro(&["verify", &pu, "--traj", bad.to_str().unwrap()])), 2);

    // q_1 scaled by 1.01.
    let mut perturbed = String::new();
    for (i, line) in text.lines().enumerate() {
        let mut cols: Vec<String> = line.split(',').map(str::to_string).collect();
        if i > 0 {
            cols[2] = format!("{:e}", cols[2].parse::<f64>().unwrap() * 1.01);
        }
        perturbed.push_str(&cols.join(","));
        perturbed.push('\n');
    }
    std::fs::write(&bad, perturbed).unwrap();
    let out = ostro(&["verify", &pu, "--traj", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let r = json(&out);
    assert!(r["el_residual"].as_f64().unwrap() > 1e-3);
    assert_eq!(r["holonomic"], false);
    assert!(r["failures"].as_array().unwrap().iter().any(|f| f == "holonomy"));
}

#[test]
fn action_check_on_solution_and_perturbed_path() {
    let dir = TempDir::new().unwrap();
    let csv = pu_trajectory(&dir, "pu.csv", "6.283185307179586", "0.031415926535897934");
    let pu = system("pais_uhlenbeck");
    let out = ostro(&["action-check", &pu, "--traj", &csv, "--variations", "20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let r = json(&out);
    assert_eq!(r["pass"], true);
    assert!(r["action_difference"].as_f64().unwrap() <= 1e-9);
    assert!(r["fit"]["q0_residual"].as_f64().unwrap() <= 1e-8);

    let perturbed = systems().join("paths/pu_perturbed.json");
    let out = ostro(&["action-check", &pu, "--path", perturbed.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(json(&out)["stationarity"]["max_abs_ds"].as_f64().unwrap() > 1e-3);

    let cos = systems().join("paths/pu_cos.json");
    assert_eq!(code(&ostro(&["action-check", &pu, "--path", cos.to_str().unwrap()])), 0);
    assert_eq!(code(&ostro(&["action-check", &pu, "--path", cos.to_str().unwrap(), "--variations", "0"])), 2);
    assert_eq!(code(&ostro(&["action-check", &pu, "--traj", &csv, "--coeffs", "5000"])), 2);
}

#[test]
fn unified_check_points() {
    let out = ostro(&["unified-check", &system("harmonic"), "--point", "0,1,0,0"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    let x: Vec<f64> = r["results"][0]["kernel_solve"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(x, [1.0, 0.0, -1.0, -1.0]);
    assert!(r["results"][0]["solver_formula_diff"].as_f64().unwrap() <= 1e-12);

    let out = ostro(&["unified-check", &system("pais_uhlenbeck"), "--random", "50"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["passed"], 50);
    assert!(r["max_solver_formula_diff"].as_f64().unwrap() <= 1e-10);
    assert!(r["max_kernel_residual"].as_f64().unwrap() <= 1e-10);

    let out = ostro(&["unified-check", &system("harmonic"), "--point", "0,1,0,0.5"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["results"][0]["constraint_residuals"][0][0], 0.5);

    let out = ostro(&["unified-check", &system("harmonic"), "--point", "0,1,0,-0.5,0", "--extended"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["results"][0]["coupling"], -0.5);

    assert_eq!(code(&ostro(&["unified-check", &system("harmonic"), "--point", "0,1,0"])), 2);
    assert_eq!(code(&ostro(&["unified-check", &system("degenerate"), "--point", "0,0.3,0.5,0,0,0.5,0"])), 3);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = pu_trajectory(&dir, "a.csv", "5", "0.05");
    let b = pu_trajectory(&dir, "b.csv", "5", "0.05");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let pu = system("pais_uhlenbeck");
    let one = ostro(&["--jobs", "1", "unified-check", &pu, "--random", "20", "--seed", "7"]);
    let four = ostro(&["--jobs", "4", "unified-check", &pu, "--random", "20", "--seed", "7"]);
    assert_eq!(one.stdout, four.stdout);
    let cos = systems().join("paths/pu_cos.json");
    let one = ostro(&["--jobs", "1", "action-check", &pu, "--path", cos.to_str().unwrap()]);
    let four = ostro(&["--jobs", "4", "action-check", &pu, "--path", cos.to_str().unwrap()]);
    assert_eq!(one.stdout, four.stdout);
    let other_seed = ostro(&["--jobs", "1", "unified-check", &pu, "--random", "20", "--seed", "8"]);
    assert_ne!(other_seed.stdout, ostro(&["unified-check", &pu, "--random", "20", "--seed", "7"]).stdout);
}
