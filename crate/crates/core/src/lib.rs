//! Controlled variable selection with model-X knockoffs.
//!
//! The crate bundles everything needed to run the knockoff filter with an
//! automatic relevance determination (ARD) Bayesian neural network as the
//! feature importance statistic, together with two baseline statistics
//! (plain MLP weight norms and random forest permutation importance):
//!
//! * [`numerics`]: dense matrices, Cholesky factorization and seeded streams.
//! * [`knockoff`]: second-order Gaussian knockoff construction and sampling.
//! * [`neural`]: MLP / ARD-BNN regression and group l2-norm importances.
//! * [`forest`]: regression forest with out-of-bag permutation importance.
//! * [`filter`]: W statistics and the knockoff+ threshold.
//! * [`simulation`]: the synthetic power/FDR study.
//! * [`stats_tests`]: Kruskal-Wallis and Bonferroni-corrected Mann-Whitney tests.
//! * [`cli`]: configuration, CSV ingestion/emission and the command pipelines.

pub mod cli;
pub mod error;
pub mod filter;
pub mod forest;
pub mod knockoff;
pub mod neural;
pub mod numerics;
pub mod pipeline;
pub mod simulation;

pub use error::{Error, Result};
pub use filter::{compute_w, knockoff_threshold, SelectionResult, WStatistics};
pub use knockoff::KnockoffModel;
pub use neural::{ArdBnn, MlpParams, TrainConfig};
pub use numerics::{Mat, RngStream};
pub use pipeline::Statistic;
