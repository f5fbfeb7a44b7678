//! Edge-based node-centred finite-volume solver for the 2D compressible Euler
//! and laminar Navier-Stokes equations, with estimates of the residual level
//! reachable at machine precision.

pub mod case;
pub mod error;
pub mod estimator;
pub mod figures;
pub mod flux;
pub mod gas;
pub mod gradient;
pub mod grid;
pub mod gridgen;
pub mod oracle;
pub mod real;
pub mod residual;
pub mod solver;
pub mod state;

pub use error::{Error, Result};
