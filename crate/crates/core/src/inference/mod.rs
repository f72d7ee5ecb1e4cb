//! Likelihood, regression fits, dispersion bounds and the COM-Poisson
//! comparator.

pub mod com_poisson;
pub mod dataset;
pub mod dispersion;
pub mod optimize;
pub mod regression;

pub use com_poisson::{com_poisson_pmf, ComPoissonParams};
pub use dataset::Dataset;
pub use dispersion::{dispersion_bounds, dispersion_curve, DispersionBounds, DispersionFamily};
pub use regression::{
    aic, fit, likelihood, neg_log_likelihood, Family, FitOptions, FitResult, RegressionModel,
};
