#![allow(dead_code)]

use std::collections::BTreeMap;

use ostro_core::legendre::DerivedSystem;
use ostro_core::{build_system, legendre_map, JetPoint, SystemModel, SystemSpec, UnifiedPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spec(name: &str, order: usize, dofs: usize, lagrangian: &str, params: &[(&str, f64)], autonomous: bool) -> SystemSpec {
    SystemSpec {
        name: name.into(),
        order,
        dofs,
        lagrangian: lagrangian.into(),
        parameters: params.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        autonomous,
    }
}

pub fn harmonic() -> SystemSpec {
    spec("harmonic", 1, 1, "0.5*(q1^2 - q0^2)", &[], true)
}

pub fn free_particle() -> SystemSpec {
    spec("free_particle", 1, 1, "0.5*q1^2", &[], true)
}

pub fn pais_uhlenbeck() -> SystemSpec {
    spec(
        "pais_uhlenbeck",
        2,
        1,
        "0.5*(q2^2 - (w1^2 + w2^2)*q1^2 + w1^2*w2^2*q0^2)",
        &[("w1", 1.0), ("w2", 2.0)],
        true,
    )
}

pub fn degenerate() -> SystemSpec {
    spec("degenerate", 2, 1, "0.5*q1^2", &[], true)
}

/// Every regular system of the corpus.
pub fn regular_examples() -> Vec<SystemSpec> {
    vec![
        harmonic(),
        free_particle(),
        pais_uhlenbeck(),
        spec("pendulum", 1, 1, "0.5*q1^2 + cos(q0)", &[], true),
        spec("parametric", 1, 1, "0.5*q1^2 - 0.5*(1 + 0.1*sin(t))*q0^2", &[], false),
        spec("coupled", 1, 2, "0.5*(q1_1^2 + q1_2^2) - 0.5*(q0_1^2 + q0_2^2) - c*q0_1*q0_2", &[("c", 0.3)], true),
        spec("stiffened", 2, 1, "0.5*(1 + q0^2)*q2^2 - 0.5*q1^2 + 0.25*q0^4", &[], true),
        spec("coupled_pu", 2, 2, "0.5*(q2_1^2 + q2_2^2) + 0.5*q1_1*q1_2 - 0.5*(q0_1^2 + q0_2^2)", &[], true),
        spec("third_order", 3, 1, "0.5*q3^2 - 0.5*q0^2", &[], true),
    ]
}

pub fn model(s: &SystemSpec) -> SystemModel {
    build_system(s).unwrap()
}

pub fn derived(s: &SystemSpec) -> DerivedSystem {
    DerivedSystem::new(&model(s))
}

/// Jet point of `J^{2k-1}` with coordinates drawn from `[-1, 1]` and `t`
/// from `[0, 1]`.
pub fn random_jet(ds: &DerivedSystem, rng: &mut ChaCha8Rng) -> JetPoint {
    let (n, k) = (ds.dofs(), ds.order());
    let t = rng.gen_range(0.0..1.0);
    let values = (0..2 * k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    JetPoint::new(t, n, 2 * k, values)
}

/// Random point on the constraint submanifold: momenta from the Legendre
/// map of a random jet.
pub fn random_constrained_point(ds: &DerivedSystem, rng: &mut ChaCha8Rng) -> UnifiedPoint {
    let jet = random_jet(ds, rng);
    let p = legendre_map(ds, &jet).unwrap();
    UnifiedPoint::new(jet, p, None)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
