//! One-degree-of-freedom Wigner functions on a uniform phase-space grid.
//!
//! Derivatives are fourth-order finite differences; time stepping is by the
//! method of lines through [`crate::integrate`].

pub mod comoving;
pub mod grid;
pub mod group;
pub mod moyal;
pub mod stencil;

pub use comoving::{
    comoving_step_rhs, evolve_comoving, evolve_lab, step_potential_scenario, Coherent, ComovingFlow,
    ComovingHamiltonian, ComovingState, GridRun, Sampled, StepHamiltonian, Translated, GRID_COLUMNS,
};
pub use grid::{gaussian_init, moments, Axis, Frame, GridMoments, WignerGrid, DEFAULT_BOUNDARY_LIMIT};
pub use group::{group_action, group_action_with, GroupElement};
pub use moyal::{moyal_permutation_check, moyal_rhs, moyal_rhs_fields, HamiltonianFields, MoyalOrder};
pub use stencil::Boundary;
