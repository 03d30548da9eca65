//! Strategyproof mechanisms for locating two obnoxious facilities on the
//! unit interval, when agents may be affected by only one of them and the
//! facilities must be at least `d` apart.
//!
//! Everything is exact: locations, utilities, probabilities and ratios are
//! [`Rational`]s.
//!
//! - [`model`]: instances, placements, lotteries, utilities
//! - [`mechanisms`]: the four mechanisms and the id registry
//! - [`opt`]: optimal welfare by vertex enumeration, grid oracle, upper bound
//! - [`verification`]: strategyproofness checks, ratios, caps, lower-bound probes
//! - [`harness`]: seeded generators, worst-case search, sweeps

pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod model;
pub mod opt;
pub mod rational;
pub mod verification;

pub use error::{Error, Result};
pub use mechanisms::{Mechanism, MechanismId, Registry};
pub use model::{Agent, Instance, Lottery, Outcome, Placement, Preference};
pub use rational::{q, Rational};
pub use verification::Ratio;
