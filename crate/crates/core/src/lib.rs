//! Paths of one-step weighted-L1 estimators ("gamma lasso") for Gaussian and
//! logistic regression.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: immutable column-oriented design matrices, response vectors and
//!   file ingestion.
//! - [`family`]: Gaussian and binomial losses, gradients, deviance, null model
//!   and IRLS working quantities.
//! - [`solver`]: coordinate descent for a single weighted-L1 penalized
//!   (weighted) least-squares problem, wrapped in IRLS for the binomial family.
//! - [`path`]: the decreasing lambda grid, the gamma-lasso weight recursion and
//!   the degrees-of-freedom heuristic.
//! - [`selection`]: AIC / AICc / BIC and K-fold cross-validation.
//! - [`verify`]: L0 oracles, restricted eigenvalues, irrepresentability and the
//!   numerical checks of the weighted-L1 versus L0 bounds.
//! - [`sim`]: the simulation study harness.

pub mod data;
pub mod error;
pub mod family;
pub mod path;
pub mod seed;
pub mod selection;
pub mod sim;
pub mod solver;
pub mod verify;

pub use data::{Column, Dataset, PenaltyScales};
pub use error::{Error, Result};
pub use family::Family;
pub use path::{fit_path, Gamma, Path, PathConfig, PathSegment};
pub use selection::{cross_validate, information_criteria, CvReport, SelectionReport};
pub use solver::{KktReport, SegmentSolution};
