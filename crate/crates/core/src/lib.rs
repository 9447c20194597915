//! Globally sparse probabilistic PCA (GSPPCA).
//!
//! A Bayesian variable-selection method for PCA in which all retained
//! components share one sparsity pattern. Inference combines a variational
//! EM algorithm on a continuous relaxation of the support with exact,
//! closed-form marginal-likelihood model selection over the nested family
//! of supports induced by the relaxed solution.
//!
//! Modules map onto the pipeline:
//! * [`special`]: log-gamma, log-scale modified Bessel K, multivariate
//!   Bessel density (the exact evidence kernel);
//! * [`linalg`]: centering, truncated SVD, PCA;
//! * [`evidence`]: exact noiseless marginal likelihood, its alpha
//!   gradient, univariate maximization, noise estimation;
//! * [`vem`]: variational EM for the relaxed model;
//! * [`selection`]: nested-model construction and evidence maximization;
//! * [`simulate`]: seeded generators for the benchmark scenarios;
//! * [`metrics`]: F-score, explained variance, enrichment scoring.

pub mod error;
pub mod evidence;
pub mod linalg;
pub mod metrics;
pub mod selection;
pub mod simulate;
pub mod special;
pub mod vem;

pub use error::{Error, Result};

/// Library version, embedded in machine-readable reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
