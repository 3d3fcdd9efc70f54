//! Robust parametric inference for randomly right-censored lifetimes.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod hypothesis;
pub mod influence;
pub mod kmpl;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod quadrature;
pub mod special;
pub mod twosample;
pub mod varest;

pub use error::{Error, Result};
