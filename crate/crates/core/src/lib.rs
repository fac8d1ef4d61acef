//! Simulation of the self-similar superprocesses SSSP(α,θ) and the
//! Fleming–Viot processes FV(α,θ) obtained from them by normalizing and
//! time-changing.
//!
//! Two independent descriptions are implemented and can be checked against
//! each other: transition kernels ([`kernels`]) and the pathwise
//! construction from a stable scaffolding marked by squared Bessel
//! excursions ([`scaffolding`], [`sssp`]).

pub mod besq;
pub mod checks;
pub mod error;
pub mod fv;
pub mod kernels;
pub mod measures;
pub mod pdrm;
pub mod randcore;
pub mod scaffolding;
pub mod sssp;
pub mod stats;

pub use error::{Error, Result};
