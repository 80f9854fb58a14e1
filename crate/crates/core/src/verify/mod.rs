//! Numerical checks of the finite-sample theory: L0 oracles, restricted
//! eigenvalues, prediction and false-discovery bounds, and seeded
//! instance suites that run them in bulk.

pub mod l0;
pub mod re;
pub mod suites;
pub mod theory;

pub use l0::{l0_exhaustive, l0_nested, L0Solution};
pub use re::{irrepresentability, restricted_eigenvalue};
pub use suites::{run_suite, Suite, SuiteConfig, SuiteReport};
pub use theory::{
    false_discovery_bound, lemma1_check, prop1_equivalence, sign_recovery_check, theorem1_check, BoundCheck, Outcome,
};
