//! Nonlinear filtering as maps on probability measures.
//!
//! Probability measures on `R^n` (`n <= 3`) are represented as densities on
//! uniform tensor grids ([`density::GridDensity`]) or, in closed form, as
//! [`gaussian::GaussianMeasure`]s. The [`operators`] module implements the
//! building blocks of a filter step:
//!
//! * prediction `P` (Markov kernel of the stochastic dynamics),
//! * lifting `Q` to the joint state/data space,
//! * conditioning `B` on an observed datum,
//! * Kalman transport `T` (the mean-field ensemble Kalman analysis),
//!
//! and [`density::gaussian_projection`] implements moment matching `G`.
//! The [`filters`] module composes them into the true filter `BQP`, the
//! mean-field ensemble Kalman filter `TQP`, the Gaussian projected filter
//! `BGQP = GTQP`, a finite-ensemble EnKF and the analytic Kalman filter.
//! [`verify`] holds the property suites behind `filtermaps verify`.

pub mod cli;
pub mod density;
pub mod error;
pub mod filters;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod verify;

pub use density::{Axis, Grid, GridDensity, Moments};
pub use error::{Error, Result};
pub use filters::{Ensemble, FilterKind, FilterTrajectory, Measure};
pub use gaussian::{BlockStructure, GaussianMeasure};
pub use model::{MapFamily, MapSpec, ModelSpec};
pub use operators::OperatorWorkspace;
