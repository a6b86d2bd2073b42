//! Stochastic mirror descent for one-vs-all multiclass margin classification.
//!
//! * [`loss`]: scoring, margins, the multiclass hinge loss and its subgradient.
//! * [`geometry`]: distance-generating functions, Bregman divergences and prox-mappings.
//! * [`smd`]: the mirror descent loop with iterate averaging and step audits.
//! * [`bounds`]: closed-form excess-risk and deviation bounds.
//! * [`synth`]: separable synthetic tasks with a certified zero-risk parameter.
//! * [`experiment`]: configuration, replicate execution, sweeps and reports.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod loss;
pub mod matrix;
pub mod smd;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{GeometryKind, GeometrySpec};
pub use loss::{Instance, LossConfig, SubgradientResult};
pub use matrix::WeightMatrix;
pub use smd::{RunOptions, RunRecord, StepSchedule};
