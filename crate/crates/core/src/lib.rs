//! Cascading-failure simulation of a protection-equipped power network under
//! dynamic load-altering attacks, and rare-event campaigns over attack
//! parameters driven by the [`skipping`] sampler.

pub mod analysis;
pub mod attack;
pub mod campaign;
pub mod case;
pub mod equilibrium;
pub mod dynamics;
pub mod error;
pub mod ieee39;
pub mod kron;
pub mod ode;
pub mod protection;

pub use case::{Bus, BusKind, GridCase, Line};
pub use equilibrium::{solve_equilibrium, EquilibriumState};
pub use error::{Error, Result};
