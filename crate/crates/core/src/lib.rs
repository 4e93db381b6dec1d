//! Sparse plus low-rank vector regression through a learned monotone link.
//!
//! A model predicts `y = g((A + L) x)` where `A` is sparse, `L` is low rank and `g`
//! is a monotone 1-Lipschitz function estimated from the data. See [`solver::fit`].

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod link;
pub mod model;
pub mod prox;
pub mod solver;
pub mod timeseries;

pub use error::{Result, SilvarError};
pub use link::LinkFunction;
pub use model::{Dataset, ModelLink, SilvarModel, Standardization};
pub use prox::{RegularizerConfig, SparseStructure};
pub use solver::{fit, FitReport, SolverConfig, StepRule};
