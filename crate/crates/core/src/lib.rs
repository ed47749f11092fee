//! Numerical toolkit for steady-state edge bursts in lossy bosonic chains.
//!
//! The quadratic model is solved three ways (Lyapunov equation, frequency
//! integral of the resolvent, time evolution of the correlator) and tied to
//! the single-particle quench loss profile. The two-body-loss model is
//! simulated with positive-P trajectories and a mean-field closure.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod positivep;
pub mod quadrature;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use model::{Boundary, ModelParams, SiteIndex, Stability, StabilityClass, Statistics, Sublattice};
