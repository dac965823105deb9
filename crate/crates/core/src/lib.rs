//! Bootstrap diagnostics for asymptotic normality.
//!
//! A bootstrap distribution `G*_m` of a studentised statistic is compared to
//! the standard normal through a discrepancy measure. Under a valid normal
//! approximation the scaled discrepancy has a known (or simulated) null law,
//! which turns the comparison into a test.

pub mod cli;
pub mod diagnostics;
pub mod discrepancy;
pub mod error;
pub mod experiments;
pub mod models;
pub mod probkernel;

pub use error::{Error, Result};
