//! Mean-field models and simulation of power-of-d routing in loss systems.

pub mod error;
pub mod insensitive;
pub mod mf_exp;
pub mod mf_phase;
pub mod ode;
mod quad;
pub mod service;
pub mod sim;

pub use error::{Error, Result};
pub use service::{ServiceDistribution, ServiceKind};
