//! Two-sample tests for G⁰-distributed speckle intensities.
//!
//! Samples are compared through Fisher–Rao geodesic distances between fitted
//! models. With one parameter known the statistics are calibrated against
//! χ²₁; with texture and scale both unknown the composite statistics are
//! calibrated by random permutations. A Monte Carlo harness and a scan-line
//! edge detector are built on the same pieces.

pub mod edge;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod mc;
pub mod mle;
pub mod model;
pub mod optim;
pub mod perm;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;
pub mod summary;

pub use error::{Error, Result};
pub use geodesic::{dist_alpha, dist_gamma};
pub use mle::{fit, FeasibilityBox, FitConfig, FitResult, Regime};
pub use model::{G0Params, Sample};
pub use perm::{permutation_test, OnFitFailure, PermutationConfig, PermutationResult};
pub use stats::{Calibration, MetricAlpha, StatisticKind, TestOutcome};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
