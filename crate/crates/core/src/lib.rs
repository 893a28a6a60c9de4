//! Hermite-series profile least squares for single-index regressions with
//! integrated regressors.
//!
//! Three models are supported: the single-index model `y = g(θᵀx) + e`, the
//! partially linear model `y = βᵀx + g(θᵀx) + e`, and the partially nonlinear
//! model `y = f(βᵀx) + g(θᵀx) + e` with a known `f`. The unknown link `g` is
//! expanded in orthonormal Hermite functions and the index is found by
//! profiling out the series coefficients.

pub mod empirical;
pub mod error;
pub mod estimators;
pub mod hermite;
pub mod inference;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod procsim;
pub mod rng;
pub mod selection;
pub mod series_fit;

pub use error::{Error, Result};
pub use estimators::{fit, fit_plsi, fit_pnlsi, fit_si, sign_fix, FitOptions, FitResult};
pub use hermite::{truncation_k, SeriesLink};
pub use model::{HRegularSpec, LinkForm, ModelKind, TrendForm};
pub use procsim::{simulate, ScenarioSpec, SimData};
