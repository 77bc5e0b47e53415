//! Continuous phase tracking of an Ornstein-Uhlenbeck phase from homodyne
//! records: closed-form and Lyapunov/Riccati error covariances, trajectory
//! simulation, estimator recursions and a seeded Monte Carlo harness.

pub mod analytic;
pub mod estimators;
pub mod model;
pub mod montecarlo;
pub mod simulate;
pub mod solvers;

pub use analytic::{AnalyticError, GainSet};
pub use estimators::{EstimatorConfig, EstimatorError};
pub use model::{
    CovarianceReport, EstimateSeries, MeasurementRecord, ModelParams, NoiseConvention, ParamErrors,
    RobustSign, Scheme, Trajectory,
};
pub use montecarlo::{EnsembleConfig, MonteCarloError, MseReport, SweepAxis, SweepReport};
pub use simulate::RngStream;
pub use solvers::SolverError;
