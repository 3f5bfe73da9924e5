//! Pricing European options on a mean-reverting jump-diffusion spot price
//! with an explicit-implicit finite-difference scheme, plus the Monte Carlo
//! and closed-form oracles used to check it.

// `!(a > b)` is used on purpose so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod discretization;
pub mod model;
pub mod montecarlo;
pub mod normal;
pub mod oracle;
pub mod par;
pub mod slices;
pub mod solver;
pub mod tridiag;

#[cfg(test)]
mod test_support;

pub use analysis::{StudyError, StudyReport, StudyRow};
pub use discretization::{DriftForm, Grid, GridError, GridSpec, JumpWeights};
pub use model::{ModelError, ModelParams, Payoff, TimeFunction};
pub use montecarlo::{McConfig, McError, McEstimate};
pub use par::Execution;
pub use solver::{price_surface, BoundaryMode, SchemeOptions, Solution, SolverError};
