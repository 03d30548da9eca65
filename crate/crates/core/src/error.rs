use thiserror::Error;

use crate::model::{Placement, Violation};
use crate::rational::Rational;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("invalid lottery: {0}")]
    InvalidLottery(String),

    #[error("placement {placement} violates minimum distance {d}")]
    Infeasible { placement: Placement, d: Rational },

    #[error("mechanism {mechanism} not applicable: {reason}")]
    NotApplicable { mechanism: String, reason: String },

    #[error("unknown mechanism {0:?}")]
    UnknownMechanism(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed instance json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
