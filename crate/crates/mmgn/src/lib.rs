//! One-bit matrix completion by majorization-minimization with Gauss-Newton steps.
//!
//! Given a partially observed matrix of signs `y_ij ∈ {-1, +1}` generated from a
//! low-rank parameter matrix `Θ*` through a probit or logistic link, this crate
//! estimates `Θ*` in factored form `Θ = U Vᵀ`. Each outer iteration majorizes the
//! negative log-likelihood by a quadratic around the current iterate, takes a
//! single Gauss-Newton step on the factors (a matrix-free minimum-norm least
//! squares solve), and safeguards the step with an Armijo backtracking line
//! search. Supporting modules provide synthetic ground-truth generators, fit
//! metrics, rank selection, and ingestion of real ratings data.

pub mod error;
pub mod gnstep;
pub mod ingest;
pub mod io;
pub mod link;
pub mod majorize;
pub mod metrics;
pub mod objective;
pub mod obs;
pub mod solver;
pub mod synth;

mod spectral;
mod util;

pub use error::{Error, Result};
pub use link::{LinkKind, LinkModel};
pub use obs::{ObservationSet, SplitPair};
pub use objective::FactorPair;
pub use solver::{
    initialize, select_rank, solve, InitKind, RankSelection, SolveReport, SolverConfig, StopReason,
};
pub use util::derive_seed;
