//! Higher-order mechanics toolkit.
//!
//! Takes a k-th order Lagrangian `L(t, q_0, ..., q_k)` written in a small
//! expression language and derives, simulates and checks:
//!
//! * the Legendre–Ostrogradsky momenta, the order-2k Euler–Lagrange
//!   expressions, the regularity Hessian and the unified Hamiltonian `Ĥ`
//!   ([`legendre`]);
//! * the Skinner–Rusk unified objects on `W_r = J^{2k-1} × J^{k-1}*`: the
//!   coupling function, `Ω_r` as a coordinate matrix, the constraint chain
//!   and the gauge-fixed solution of `i(X)Ω_r = 0` ([`unified`]);
//! * trajectories of the Lagrangian and unified systems and their
//!   verification ([`dynamics`], [`verify`]);
//! * direct numerical checks of the variational principles ([`variational`]).
//!
//! The crate is `no_std` and only needs `alloc`. Everything is double
//! precision.

#![no_std]
#![forbid(unsafe_code)]
// `!(x <= tol)` is used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calculus;
pub mod dynamics;
pub mod equiv;
pub mod eval;
pub mod expr;
pub mod jet;
pub mod legendre;
pub mod linalg;
pub mod ode;
pub mod parse;
pub mod simplify;
pub mod unified;
pub mod variational;
pub mod verify;

pub use calculus::{diff, total_derivative, CalculusError};
pub use dynamics::{
    integrate, integrate_unified, lagrangian_rhs, ostrogradsky_energy, DynamicsError,
    StateLayout, Trajectory,
};
pub use equiv::{equivalent_numeric, Equivalence, EquivalenceError, SampleBox};
pub use eval::{eval, Bindings, Compiled, EvalError};
pub use expr::{Expr, Func, Node, Var};
pub use jet::{
    build_system, jet_of_polynomial, JetPoint, Polynomial, SystemError, SystemModel, SystemSpec,
    UnifiedPoint,
};
pub use legendre::{
    legendre_inverse, legendre_map, regularity_report, DerivedSystem, InverseError,
    RegularityReport,
};
pub use ode::{IntegratorOptions, Method};
pub use parse::{parse, ParseContext, ParseError, Scope};
pub use simplify::simplify;
pub use unified::{
    constraint_residuals, coupling, explicit_semispray, hamiltonian_section_p, kernel_check,
    omega_r_matrix, solve_unified_vf, KernelReport, SemisprayVector, TwoFormMatrix, UnifiedError,
};
pub use variational::{
    action_derivative, discrete_action, fit_path, stationarity_check, Basis, Curve, Integrand,
    PathRepresentation, Variation,
};
pub use verify::{verify_trajectory, VerificationReport, VerifyThresholds};
