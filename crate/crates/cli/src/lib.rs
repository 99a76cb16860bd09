//! Scenario runner for the `qmoments` library: strict JSON configs,
//! CSV trajectories with SVG plots, the fourth-order closure comparison,
//! grid-versus-moment cross-validation and the bracket axiom suite.

pub mod compare;
pub mod config;
pub mod crossval;
pub mod failure;
pub mod plot;
pub mod run;
pub mod verify;

pub use failure::Failure;
