//! Data-driven synthesis of stabilizing intervention protocols for
//! quadratic network games.
//!
//! A central regulator steers self-interested agents, which play
//! simultaneous best responses over an interaction network, toward a
//! target action profile. The regulator never sees the network or the
//! agents' utility parameters: it records intervention/action data,
//! builds differenced data matrices, and synthesizes PI intervention
//! gains directly from the data by solving linear matrix inequalities.
//! A budget-constrained variant saturates the intervention and certifies
//! an ellipsoidal region of attraction.

pub mod closed_loop;
pub mod data;
pub mod game;
pub mod io;
pub mod lmi;
pub mod numeric;
pub mod plot;
pub mod synthesis;

pub use game::{NetworkGame, OpenLoopSystem, TargetProfile};
