//! Finite-horizon MDP planning and reach-avoid verification, with an
//! orbit-maintenance model for a drag-limited low-Earth-orbit mission.
//!
//! - [`mdp`]: generic models, backward induction, policy evaluation,
//!   forward propagation, seeded rollouts and an exhaustive oracle.
//! - [`astro`]: altitude, density, drag decay, maneuver cost and
//!   repeat-ground-track resonances.
//! - [`domain`]: the orbit-maintenance MDP (altitude, fuel, maneuver cooldown).
//! - [`verify`]: unsafe sets, safety value functions and chance-constraint checks.

pub mod astro;
pub mod domain;
pub mod mdp;
pub mod verify;
