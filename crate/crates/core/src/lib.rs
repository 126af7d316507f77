//! Symbolic regression by residual-chained GP runs with linear scaling.
//!
//! A run is a sequence of short, independent GP searches. Each search fits
//! the residual error left by the previous one: every individual is
//! linearly scaled against the current target by least squares, fitness is
//! the variance (or MSE) of the scaled residual, and the best scaled
//! individual of the search becomes one additive term of the final model.
//! A validation set with a rolling-mean error criterion picks how much of
//! the accumulated chain to keep.
//!
//! Entry points: [`bench::run_trial`] for a single seeded trial,
//! [`bench::run_suite`] for multi-trial aggregates, [`chain::run_sgpdt`]
//! for the raw train/validate loop on pre-split data.

pub mod bench;
pub mod chain;
pub mod data;
pub mod error;
pub mod evolve;
pub mod expr;
pub mod scaling;

pub use bench::{rmse, run_suite, run_trial, RunConfig, TrialReport, Variant};
pub use chain::{run_sgpdt, FinalModel, ModelChain};
pub use data::{gen_uball5d, load_csv, split, Dataset, SplitSpec};
pub use error::{Error, Result};
pub use expr::{CaseMatrix, EvalCounter, ExprTree, NodeKind};
pub use scaling::{apply_scaling, fit_scaling, ScaledModel, ScalingCoeffs};
