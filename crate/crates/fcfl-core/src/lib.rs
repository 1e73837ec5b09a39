//! Simulation laboratory for decentralised graph colouring by trial and
//! feedback: vertices repeatedly draw colours from private distributions,
//! sense collisions with neighbours, lock in on success, and periodically
//! forget locks on a shared reset schedule.
//!
//! The crate splits into graphs and colourings ([`graph`]), the slot-level
//! simulator ([`engine`]), closed-form convergence estimates ([`bounds`]),
//! batch experiment drivers ([`experiments`]), and an RFID tag-inventory
//! application of the same dynamics ([`rfid`]).

pub mod bounds;
pub mod engine;
pub mod experiments;
pub mod graph;
pub mod rfid;
mod seeding;

pub use seeding::mix_seed;
