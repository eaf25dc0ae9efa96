//! Littlewood-Paley analysis, Besov norms, linear transport solvers and a
//! successive-approximation engine for the 2D viscous shallow water system
//! on a periodic grid.

pub mod besov;
pub mod calibration;
pub mod error;
pub mod grid;
pub mod io;
pub mod lab;
pub mod linear;
pub mod partition;
pub mod sw;

pub use besov::{BesovParams, Exponent, NormReport, TrajectoryNorm};
pub use calibration::Constants;
pub use error::{Error, Result};
pub use grid::{Field, Grid, SpectralField};
pub use partition::DyadicPartition;
