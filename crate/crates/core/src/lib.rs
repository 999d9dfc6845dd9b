//! Numerical laboratory for quantum beating in a one-dimensional double well made of
//! two point interactions at `x = -a` and `x = +a`.
//!
//! * [`spectral`]: bound states of the two-delta Hamiltonian.
//! * [`freeprop`]: the free Schrödinger propagator and closed-form free evolution of
//!   exponential profiles.
//! * [`charges`]: product-integration solver for the nonlinear Volterra equations
//!   satisfied by the wavefunction values at the two wells.
//! * [`dynamics`]: reconstruction of the full wavefunction and beating observables.
//!
//! Units: `hbar = 1`, particle mass `1/2`, so the free Hamiltonian is `-d^2/dx^2`.

pub mod charges;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod faddeeva;
pub mod freeprop;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
