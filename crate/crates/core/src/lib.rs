//! Numerical library for the mixed isoperimetric-isodiametric functional
//! `rad(E)·P(E)` at fixed volume on model surfaces.
//!
//! Modules, bottom-up:
//!
//! * [`geometry`]: model backends (metric, distance, geodesics, balls).
//! * [`region`]: polygonal regions with volume, perimeter, curvature.
//! * [`meb`]: minimal enclosing balls, i.e. the extrinsic radius.
//! * [`shapeopt`]: first variations and constrained descent on `rad·P`.
//! * [`obstacle`]: the obstacle-problem variational inequality on a graph chart.
//! * [`catalog`]: catenoid and disk examples of free-boundary minimal surfaces.
//! * [`verify`]: experiments that check the inequalities and emit reports.
//! * [`experiment`]: JSON experiment configs and the runner behind the CLI.

pub mod catalog;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod numeric;

pub use error::{Error, Result};
pub mod meb;
pub mod obstacle;
pub mod region;
pub mod shapeopt;
pub mod verify;
