//! Simulation and analysis toolkit for a forced demand-supply market model.
//!
//! The reduced planar system couples the price deviation `p` and the excess
//! demand `q` through a cubic demand law with collectability and saturation
//! effects, linear supply response, damping `delta`, and sinusoidal forcing
//! of amplitude `a`. The crate provides:
//!
//! - [`model`]: parameter and state types, vector fields, the conserved
//!   energy of the unforced limit, fixed points, exact saddle connections,
//!   and the reduction from the full price/demand/supply model;
//! - [`integrator`]: fixed-step RK4 and adaptive Dormand-Prince stepping
//!   with escape detection;
//! - [`melnikov`]: the closed-form chaos threshold and root structure of
//!   the manifold-splitting distance, with a quadrature cross-check;
//! - [`poincare`]: the stroboscopic period map, attractor classification,
//!   and Newton refinement of periodic points;
//! - [`basin`]: parallel basin-of-attraction sweeps and box-counting
//!   dimension estimates of basin boundaries;
//! - [`io`] and [`cli`]: CSV / pixmap / key=value formats behind the
//!   `dsdyn` binary.

pub mod basin;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod io;
pub mod melnikov;
pub mod model;
pub mod poincare;

pub use error::{Error, Result};
