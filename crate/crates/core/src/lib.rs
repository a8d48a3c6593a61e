//! Numerical laboratory for the longitudinal and torsional dynamics of a
//! suspension bridge modeled as a hinged beam coupled to a pair of sagging
//! cables through rigid hangers.
//!
//! The pipeline: solve the equilibrium cable shape ([`cable`]), project the
//! deck/cable equations onto a sine basis ([`galerkin`]), integrate the
//! resulting ODE system ([`dynamics`]), continue branches of periodic
//! longitudinal modes in the period ([`modes`]), and decide torsional
//! stability of each mode from the monodromy of the time-periodic torsional
//! linearization ([`floquet`]). The [`cli`] module drives the whole pipeline
//! and emits tables and plot data.

pub mod cable;
pub mod cli;
pub mod dynamics;
pub mod floquet;
pub mod galerkin;
pub mod modes;
pub mod params;
pub mod reference;

mod ode;
mod par;
mod quad;

pub use params::BridgeParams;
