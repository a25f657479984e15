//! Differentially private federated linear regression from one sample per client.
//!
//! Every client holds a single pair `(x, y)`. Each round the client transmits a
//! cosine-modulated, Gaussian-perturbed version of its feature vector together
//! with the public response. The server algebraically removes the modulation
//! and noise terms from the aggregated second moment and recovers an unbiased
//! estimate of the centralized least-squares gradient, which drives a
//! projected gradient update of the global model.
//!
//! Module map:
//! - [`model`]: datasets, protocol parameters, model state, orthonormal
//!   modulation sets, standardization and splitting.
//! - [`modulation`]: the client-side map, its privatized form, and its
//!   sensitivity constants.
//! - [`accounting`]: Gaussian-mechanism calibration, zCDP composition,
//!   budget/ledger bookkeeping, and feature-norm control.
//! - [`protocol`]: server aggregation, debiasing, gradient estimation, and
//!   round orchestration.
//! - [`estimators`]: one-shot moment estimator, OLS reference, the DP-SGD
//!   FedAvg baseline, and the R-squared metric.
//! - [`bounds`]: closed-form variance, convergence, and reconstruction
//!   bounds.
//! - [`validate`]: Monte-Carlo validators for the identities behind those
//!   bounds.
//! - [`simulator`]: synthetic data generation and privacy sweeps across the
//!   three methods.

pub mod accounting;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod model;
pub mod modulation;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod validate;

pub use error::{Error, Result};
