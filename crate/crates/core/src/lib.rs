//! Numerical verification of nontangential maximal function estimates for
//! elliptic systems on Lipschitz graph domains.

pub mod coefficients;
pub mod config;
pub mod error;
pub mod experiment;
pub mod extrapolation;
pub mod fields;
pub mod geometry;
pub mod integrate;
pub mod maximal;
pub mod mesh;
pub mod plot;
pub mod poisson;
pub mod polygon;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod verifiers;

pub use error::{Error, Result};
