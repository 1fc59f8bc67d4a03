//! Confidence regions for identified sets defined by conditional moment
//! inequalities `E[m(W, theta) | X] >= 0`.
//!
//! The main estimator inverts a Kolmogorov–Smirnov statistic whose sample
//! moments are weighted by their inverse standard deviation, truncated below
//! at a sequence `sigma_n -> 0`. Two competitor estimators (bounded weights,
//! kernel smoothing), a library of moment models, and a Monte Carlo harness
//! round out the crate.

pub mod alt;
pub mod cli;
pub mod error;
pub mod instrument;
pub mod ksstat;
pub mod mc;
pub mod model;
pub mod models;
pub mod regions;
pub mod sample;
pub mod sfunc;

mod scan;

pub use error::{Error, Result};
pub use instrument::{Instrument, InstrumentFamily, KernelId};
pub use ksstat::{MomentSummary, StatResult, TuningPolicy};
pub use model::{Direction, MomentFunction, MomentModel, Monotonicity};
pub use regions::{ConfidenceRegion, PointSet, SearchStrategy, ThetaGrid};
pub use sample::Sample;
pub use sfunc::SFunction;
