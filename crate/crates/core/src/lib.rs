//! Deformed Marchenko-Pastur laws for sample covariance matrices with a
//! Jacobi-type population, their right edge, and the extremal eigenvalues.
//!
//! The analytic layers (`measure`, `freeconv`, `empirical`, `extremal`) are
//! generic over [`scalar::Real`]; `ensemble` samples matrices in `f64`. The
//! aliases below fix the scalar to `f64`.

pub mod empirical;
pub mod ensemble;
pub mod error;
pub mod extremal;
pub mod fixed_point;
pub mod freeconv;
pub mod measure;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};

pub type Measure = measure::JacobiMeasure<f64>;
pub type Point = freeconv::SpectralPoint<f64>;
pub type Edge = freeconv::EdgeReport<f64>;
pub type Spectrum = empirical::PopulationSpectrum<f64>;
pub type Omega = empirical::OmegaContext<f64>;
pub type Weibull = extremal::WeibullParams<f64>;
pub type Gaussian = extremal::GaussianParams<f64>;
