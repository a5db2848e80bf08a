//! History-aware location-privacy mechanisms on finite grid worlds.
//!
//! The crate provides:
//! - a grid-world trajectory model ([`gridworld`]),
//! - the belief-state MDP quantities driving the release mechanism ([`belief`]),
//! - a small neural toolkit and an actor-critic trainer ([`neural`], [`a2c`]),
//! - a per-step Blahut-Arimoto baseline ([`myopic`]),
//! - an exact enumeration oracle for small worlds ([`oracle`]),
//! - the experiment runner behind the CLI ([`experiment`]).

pub mod a2c;
pub mod belief;
pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod myopic;
pub mod neural;
pub mod oracle;

pub use error::{Error, Result};
