//! Simulation and verification toolkit for locality claims.
//!
//! The crate is organized around five pieces:
//!
//! * [`hv`]: local hidden-variable models (instruction sets and synchronized clocks)
//!   whose outcome functions only ever see the local setting.
//! * [`oracle`]: closed-form quantum predictions used as comparison targets.
//! * [`stats`]: correlation estimators, the CHSH quantity and the two-branch Bell check.
//! * [`path`]: discrete actions, time-sliced propagators and phasor resultants.
//! * [`interferometer`]: a two-sided resultant-phase interferometer with a shared source event.
//!
//! [`harness`] runs the hidden-variable experiments as three cooperating processes over
//! a line-delimited protocol so that no-signaling can be audited from the logs.

pub mod config;
pub mod error;
pub mod harness;
pub mod hv;
pub mod interferometer;
pub mod oracle;
pub mod path;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
