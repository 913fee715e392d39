//! Learning to set QAOA angles without per-instance optimization.
//!
//! The crate builds a database of BFGS-optimized QAOA angles over generated
//! MaxCut and dense QUBO instances, clusters either the angles themselves or
//! instance encodings to obtain `K` angle recommendations for unseen
//! instances, evaluates them under cross-validation, and runs them inside
//! Recursive-QAOA with a fixed per-iteration circuit budget.
//!
//! Conventions used throughout:
//! - Every Ising model is *minimized*. MaxCut is encoded as the negated cut,
//!   QUBOs through `x_i = (1 - s_i) / 2`. Metrics convert back to the native
//!   objective at the boundary.
//! - Bit `i` of a basis-state index is qubit `i`; bit value `0` is spin `+1`.

pub mod angle_opt;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod evalharness;
pub mod features;
pub mod instances;
pub mod ising;
pub mod optim;
pub mod qaoa_sim;
pub mod recommend;
pub mod rng;
pub mod rqaoa;
pub mod store;

pub use error::{Error, Result};
