//! Hamiltonian moment dynamics for quantum expectation values.
//!
//! The crate covers three layers:
//!
//! * Poisson brackets on functionals of the first and second moments
//!   ([`brackets`]), with Casimirs and a numerical axiom check;
//! * Gaussian moment flows and closures for `P²/2 + V(Q)` Hamiltonians
//!   ([`dynamics`]);
//! * a one-degree-of-freedom Wigner solver in the lab frame and in the frame
//!   co-moving with the expectation values ([`wigner`]).
//!
//! Time stepping lives in [`integrate`].

pub mod brackets;
pub mod dynamics;
pub mod error;
pub mod functional;
pub mod integrate;
pub mod model;
pub mod poly;
pub mod potential;
pub mod wigner;

pub use error::{Error, Result};
