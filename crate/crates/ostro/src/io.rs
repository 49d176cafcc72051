//! System definitions, vectors, reports and trajectory CSV files.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ostro_core::legendre::DerivedSystem;
use ostro_core::{build_system, StateLayout, SystemSpec, Trajectory};
use serde::Serialize;

use crate::error::CliError;

pub struct Loaded {
    pub spec: SystemSpec,
    pub ds: DerivedSystem,
}

pub fn load_spec(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let spec: SystemSpec =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let model = build_system(&spec).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let ds = DerivedSystem::new(&model);
    log::info!("loaded `{}` (k = {}, n = {})", spec.name, spec.order, spec.dofs);
    Ok(Loaded { spec, ds })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Comma-separated reals.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::input(format!("`{s}` is not a finite number")))
        })
        .collect()
}

/// `lo,hi` with `lo < hi`.
pub fn parse_box(text: &str) -> Result<(f64, f64), CliError> {
    match parse_vector(text)?.as_slice() {
        [lo, hi] if lo < hi => Ok((*lo, *hi)),
        _ => Err(CliError::input(format!("box `{text}` must be `lo,hi` with lo < hi"))),
    }
}

pub fn to_json<T: Serialize>(value: &T, pretty: bool) -> String {
    let mut s = if pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) }
        .expect("reports serialize");
    s.push('\n');
    s
}

/// Writes `text` to stdout, or to `out` when given.
pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display()))),
        None => {
            io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::input(format!("stdout: {e}")))
        }
    }
}

pub fn csv_header(layout: StateLayout) -> Vec<String> {
    let (n, k) = (layout.dofs(), layout.order());
    let mut h = vec!["t".to_string()];
    for a in 1..=n {
        for i in 0..2 * k {
            h.push(format!("q_{i}_{a}"));
        }
    }
    if layout.is_unified() {
        for a in 1..=n {
            for l in 0..k {
                h.push(format!("p_{l}_{a}"));
            }
        }
    }
    h
}

/// 17 significant digits, enough to round-trip any double.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(traj: &Trajectory, w: W) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::input(format!("writing CSV: {e}"));
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(csv_header(traj.layout())).map_err(err)?;
    for (t, state) in traj.grid().iter().zip(traj.states()) {
        let row = std::iter::once(*t).chain(state.iter().copied()).map(format_float);
        out.write_record(row).map_err(err)?;
    }
    out.flush().map_err(|e| CliError::input(format!("writing CSV: {e}")))
}

/// Reads a trajectory whose header matches the jet or the unified layout
/// of a system with `dofs` and `order`.
pub fn read_csv(path: &Path, dofs: usize, order: usize) -> Result<Trajectory, CliError> {
    let bad = |msg: String| CliError::input(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let layout = [StateLayout::Jet { dofs, order }, StateLayout::Unified { dofs, order }]
        .into_iter()
        .find(|l| csv_header(*l) == header)
        .ok_or_else(|| bad(format!("header does not match a k = {order}, n = {dofs} trajectory")))?;
    let mut grid = Vec::new();
    let mut states = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(format!("row {}: not a list of finite numbers", line + 2)))?;
        grid.push(values[0]);
        states.push(values[1..].to_vec());
    }
    Trajectory::new(grid, states, layout).map_err(|e| bad(e.to_string()))
}
