//! Polaron-frame time-convolutionless master equation for excitation
//! energy transfer in chromophore networks.

pub mod bath;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod numerics;
pub mod observables;
pub mod polaron;
pub mod rates;
pub mod validation;

pub use error::{Error, Result};
