//! Finite-dimensional Koopman approximations of discrete-time nonlinear
//! systems, lifted observability/controllability gramians, and balanced
//! truncation of the resulting lifted linear model.
//!
//! The pipeline mirrors the CLI: [`dynsys`] simulates trajectories,
//! [`edmd`] lifts them through a [`dictionary`] and fits the operator,
//! [`gramians`] computes lifted and projected gramians, and [`balance`]
//! balances and truncates the lifted model.

pub mod balance;
pub mod demo;
pub mod dictionary;
pub mod dynsys;
pub mod edmd;
mod error;
pub mod exec;
pub mod gramians;
pub mod io;
pub mod linalg;
pub mod poly;

pub use error::{Error, Result};
