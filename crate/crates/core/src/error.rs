use std::io;

use thiserror::Error;

use crate::dataset::{ItemId, UserId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rating {rating} outside 1..=5")]
    RatingOutOfRange { line: usize, rating: i64 },

    #[error("rating {rating} for user {user}, item {item} outside 1..=5")]
    InvalidRating {
        user: UserId,
        item: ItemId,
        rating: i64,
    },

    #[error("line {line}: duplicate rating for user {user}, item {item}")]
    DuplicateRating {
        line: usize,
        user: UserId,
        item: ItemId,
    },

    #[error("rating matrix is empty")]
    EmptyMatrix,

    #[error("unknown user {0}")]
    UnknownUser(UserId),

    #[error("user {0} already exists")]
    UserIdCollision(UserId),

    #[error("a user cannot be compared with itself ({0})")]
    SameUser(UserId),

    #[error("need {needed} candidates, only {available} available")]
    NotEnoughCandidates { needed: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("every category is exhausted")]
    Exhausted,

    #[error("quadrature did not converge after {evaluations} evaluations (error estimate {estimate:e})")]
    Quadrature { evaluations: usize, estimate: f64 },

    #[error("accuracy target {target} unattainable (top-k similarity sum is {max})")]
    Unattainable { target: f64, max: f64 },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
