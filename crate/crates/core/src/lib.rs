//! Semi-stochastic multi-stage decisions via sampled separation.

pub mod ball;
pub mod bisection;
pub mod engines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod inventory;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod remodel;

pub use error::{Error, Result};
