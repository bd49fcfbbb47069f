//! Simultaneous Monte Carlo error for finite combinations of sample means and
//! sample quantiles.
//!
//! The pipeline is:
//!
//! 1. [`estimation`]: point estimates (means, order-statistic quantiles), the
//!    indicator process used for variance estimation, and kernel density values
//!    at the estimated quantiles.
//! 2. [`covariance`]: IID sample covariance or batch means, assembled into the
//!    plug-in asymptotic covariance of the joint estimator.
//! 3. [`mvn`]: multivariate normal rectangle probabilities (Genz transform with a
//!    randomized lattice rule).
//! 4. [`region`]: uncorrected, Bonferroni and calibrated simultaneous
//!    hyperrectangles.
//!
//! [`samplers`], [`harness`] and [`plotio`] provide reference experiments, a
//! coverage-study runner, file ingestion, JSON reports and SVG plots.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The type
//! aliases below fix the scalar to `f64`, which is what the IO layer uses.

pub mod covariance;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod mvn;
pub mod plotio;
pub mod region;
pub mod samplers;
mod scalar;
mod summation;

pub use error::{Error, Result, Warning};
pub use scalar::Scalar;

pub type SampleMatrixF64 = estimation::SampleMatrix<f64>;
pub type SampleMatrixF32 = estimation::SampleMatrix<f32>;
pub type JointEstimateF64 = estimation::JointEstimate<f64>;
pub type JointEstimateF32 = estimation::JointEstimate<f32>;
pub type DensityAtQuantilesF64 = estimation::DensityAtQuantiles<f64>;
pub type AsymptoticCovarianceF64 = covariance::AsymptoticCovariance<f64>;
pub type AsymptoticCovarianceF32 = covariance::AsymptoticCovariance<f32>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type MvnProblemF64 = mvn::MvnProblem<f64>;
pub type MvnProblemF32 = mvn::MvnProblem<f32>;
pub type ConfidenceRegionF64 = region::ConfidenceRegion<f64>;
pub type ConfidenceRegionF32 = region::ConfidenceRegion<f32>;
pub type RegionSetF64 = region::RegionSet<f64>;
