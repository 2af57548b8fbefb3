//! Bayesian limit setting for spontaneous-radiation searches.
//!
//! The pipeline follows the standard chain of an HPGe rare-event search:
//! emission-rate constants (`constants`), material-dependent signal shapes
//! with exact per-bin integrals (`detector`), binned spectra and seeded toy
//! generation (`spectrum`), posterior inference on the yield Y = 1/R_K^2 by
//! grid quadrature and Metropolis-Hastings (`inference`), and limit
//! extraction with credible intervals, the R_K transform and coverage
//! studies (`limits`). `config` wires it all to TOML run files.

pub mod config;
pub mod constants;
pub mod detector;
pub mod error;
pub mod inference;
pub mod limits;
pub mod rng;
pub mod spectrum;

pub use error::{Error, ErrorKind, Result};
