//! Interval exchanges, Rauzy-Veech renormalisation and cocycles with
//! logarithmic singularities: correction of Birkhoff sums and ergodicity
//! diagnostics for the associated skew products.

pub mod birkhoff;
pub mod catalog;
pub mod cocycle;
pub mod correction;
pub mod engine;
pub mod ergodicity;
pub mod error;
pub mod iet;
pub mod lab;
pub mod linalg;
pub mod num;
pub mod rauzy;
pub mod spectral;

pub use error::{Error, Result};
