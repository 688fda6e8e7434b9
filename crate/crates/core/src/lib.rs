//! Trajectory recommendation: learn to rank POIs for a query, learn
//! POI-to-POI transitions from feature-level Markov chains, and decode routes
//! that balance the two.

pub mod bundle;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod ranking;
pub mod rng;
pub mod route;
pub mod transition;

pub use error::{Error, Result};
