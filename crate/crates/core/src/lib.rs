//! Nonlinear frequency response functions of convergent mechanical systems,
//! computed by steady-state sweeps, and FRF-driven adaptive PD vibration tuning.
//!
//! | module | contents |
//! |---|---|
//! | [`model`] | MDOF systems with odd polynomial stiffness, Duffing presets |
//! | [`satellite`] | MRP attitude dynamics, Lagrangian form, wheel disturbance |
//! | [`sim`] | RK4, steady-state detection, multi-initial-condition runs |
//! | [`convergence`] | Jacobians, generalized Jacobian, definiteness diagnostics |
//! | [`frf`] | excitation grids, FRF sweeps, Frobenius norms |
//! | [`tuner`] | PD control, the adaptation law and tuning loop |
//! | [`tracking`] | energy-based tracking controller, closed-loop satellite |
//! | [`scenario`] | tunable MDOF and satellite plants |
//! | [`config`], [`io`], [`cli`] | scenario files, CSV/JSON output, subcommands |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod convergence;
pub mod error;
pub mod frf;
pub mod io;
pub mod model;
pub mod satellite;
pub mod scenario;
pub mod sim;
pub mod tracking;
pub mod tuner;

pub use error::{Error, Result};
