//! Bayesian semiparametric competing-risk penetrance estimation on pedigrees.

pub mod ascertainment;
pub mod baseline;
pub mod cohort;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod genetics;
pub mod inference;
pub mod pedigree;
pub mod peeling;
pub mod predict;
pub mod quadrature;
pub mod riskmodel;
pub mod seeds;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
