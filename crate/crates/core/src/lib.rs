//! Online auto-tuning of hot computing kernels.
//!
//! While an application runs, a tuner thread enumerates a discrete space of
//! kernel implementations ([`space`]), instantiates candidates
//! ([`variantgen`]), scores them ([`evaluator`]) and publishes faster ones
//! through an atomically swappable slot ([`dispatcher`]). The
//! [`explorer`] decides which point to try next and the [`governor`] keeps
//! the time spent doing so within a fraction of the run time plus a share
//! of the gains already realized. [`tuner`] wires them together;
//! [`harness`] provides the two benchmark drivers and [`reporting`]
//! aggregates their results.

pub mod clock;
pub mod dispatcher;
pub mod evaluator;
pub mod explorer;
pub mod governor;
pub mod harness;
pub mod image;
pub mod reporting;
pub mod space;
pub mod synthetic;
pub mod tuner;
pub mod variantgen;

pub use space::{KernelKind, KernelShape, Param, ParameterDomain, TuningPoint, TuningSpace};
pub use variantgen::{DistanceKernel, KernelVariant, LintraKernel, RegisterBudget};
