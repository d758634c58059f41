//! Pseudospectral simulation of the one-dimensional electron Euler-Poisson
//! system with pressure `n^3/3`, together with its Klein-Gordon
//! reformulations, quadratic normal forms and modified-scattering
//! diagnostics.

pub mod bilinear;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod normal_form;
pub mod run;
pub mod scattering;
pub mod spectral;
pub mod symbols;
pub mod verify;

pub use error::{Error, Result};
