//! Exact discrete-event simulation and verification toolkit for
//! interference queueing networks on grids and tori.

pub mod acceptance;
pub mod construction;
pub mod driving;
pub mod fluid;
pub mod dynamics;
pub mod experiments;
pub mod interference;
pub mod lattice;
pub mod stationary;
pub mod stats;

pub use driving::{DrivingStream, Event, EventKind, Mark};
pub use dynamics::{Count, DynamicsConfig, InitialCondition, System};
pub use interference::{InterferenceSequence, Weight};
pub use lattice::{Lattice, Region, Site};
