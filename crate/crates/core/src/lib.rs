//! Deep-feature background modeling and a-contrario validation of
//! change-detection masks.
//!
//! The numerical core ([`special`], [`background`], [`pvalue`],
//! [`acontrario`]) is generic over the scalar type through [`Real`]; the
//! aliases below fix it to `f64`, which is what the on-disk model format
//! stores and what the command-line pipeline uses.

pub mod acontrario;
pub mod background;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pvalue;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

/// Gaussian component with `f64` statistics.
pub type Component = background::GaussianComponent<f64>;
/// Global (position-free) mixture with `f64` statistics.
pub type Mixture = background::GlobalMixture<f64>;
/// Localized mixture with `f64` statistics.
pub type Model = background::LocalizedMixtureModel<f64>;
/// Localized mixture in single precision, for memory-bound experiments.
pub type Model32 = background::LocalizedMixtureModel<f32>;
/// Per-pixel log p-value map with `f64` values.
pub type PValueMap = pvalue::LogPValueMap<f64>;
/// Validation report with `f64` scores.
pub type Report = acontrario::ValidationReport<f64>;
