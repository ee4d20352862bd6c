use thiserror::Error;

use crate::dataset::{DataError, Group};

/// Failures of the estimation pipeline (proportions, order statistics, bounds).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("no {0} units are observed in the post period")]
    EmptySelection(Group),
    #[error("trimming proportion {0} keeps no observations")]
    DegenerateTrim(f64),
    #[error("vanishing denominator: {0} is zero")]
    DegenerateDenominator(String),
    #[error("baseline selection rate of the other group is zero")]
    DivisionByZeroBaseline,
    #[error("monotonicity direction missing for source {0}")]
    DirectionMissing(usize),
    #[error("empirical distribution needs at least one finite value")]
    EmptySample,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<DataError> for EstimationError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::EmptyGroup(g) => EstimationError::EmptySelection(g),
            other => EstimationError::InvalidArgument(other.to_string()),
        }
    }
}
