//! Simulation and analysis of multi-party quantum private comparison built on
//! entanglement swapping between d-level cat states and d-level Bell states.
//!
//! Two engines drive the protocol: a symbolic one ([`label_algebra`]) that
//! tracks states by their Z_d label tuples, and a dense state-vector oracle
//! ([`qudit_state`]) used to certify it.

pub mod adversary;
pub mod audit;
pub mod cli;
pub mod equivalence;
pub mod label_algebra;
pub mod protocol;
pub mod qudit_state;
pub mod transcript;
