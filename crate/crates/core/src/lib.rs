//! Batch SLAM over random finite sets.
//!
//! The engine alternates between sampling a data association (a partition of
//! every time-indexed measurement into per-source cells) and solving the
//! conditional trajectory/map estimate with a Gauss-Newton factor graph. The
//! tail of that chain is then fused into a single trajectory density and a
//! Poisson multi-Bernoulli map.
//!
//! Module map:
//!
//! - [`rfs`]: Gaussian densities, Bernoulli / multi-Bernoulli sets and Poisson
//!   intensities shared by every other module.
//! - [`models`]: bistatic radio motion / measurement / detection / clutter
//!   models plus the synthetic scenario generator.
//! - [`association`]: partitions, cell likelihoods, Gibbs and split/merge
//!   sweeps, the combined sampler and existence sampling.
//! - [`graph`]: factor assembly, damped Gauss-Newton and covariance recovery.
//! - [`merge`]: marginalization of kept samples into the final posterior.
//! - [`metrics`]: GOSPA, NMI and RMSE.
//! - [`fixtures`]: small deterministic problems used by tests and examples.
//! - [`harness`]: run configuration, the outer sampling/optimization loop,
//!   Monte-Carlo orchestration and output files.

pub mod association;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod merge;
pub mod metrics;
pub mod models;
pub mod rfs;

pub use association::{Partition, SamplerMode};
pub use graph::{GraphProblem, GraphSlamResult};
pub use harness::{RunConfig, RunReport};
pub use models::{MeasurementBatch, ScenarioConfig, SensorState};
pub use rfs::{GaussianDensity, MultiBernoulli};
