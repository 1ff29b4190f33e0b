//! Bayesian A- and D-optimal designs for functional linear and generalised
//! linear models whose factors are functions of time.
//!
//! A profile factor is represented by its coefficients in a B-spline or
//! power basis. The model parameters are functions of time too, expanded in
//! their own bases. All integrals over time are computed exactly, so the
//! model matrix of a design reduces to products of coefficient rows and
//! Gram matrices.

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod calculus;
pub mod config;
pub mod criteria;
pub mod error;
pub mod formula;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod priors;
pub mod quadrature;
pub mod run;

pub use error::{Error, Result};
pub use config::RunConfig;
pub use model::{Coord, Design, ModelAssembly};
pub use optimizer::{multi_start, SearchConfig, SearchResult};
pub use run::{run_design_search, summary_text, write_outputs};
