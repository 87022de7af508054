//! Attenuation analysis for linear plants with strong zero-average
//! vibration: a fast-phase change of variables, period averaging, a
//! stabilizing game-Riccati solver with bisection for the best achievable
//! disturbance attenuation, a power-series corrector in the vibration
//! rate, and a verification harness (periodic reference solutions,
//! spectral defects, monodromy certificates, time-domain simulation).

pub mod cli;
pub mod error;
pub mod expansion;
pub mod harness;
pub mod hinf;
pub mod matkit;
pub mod periodic;
pub mod riccati;
pub mod vibration;

pub use error::{Error, Result};
