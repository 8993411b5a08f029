//! Private neighbourhood collaborative filtering.
//!
//! Four neighbour selection strategies (top-k, global weighted sampling,
//! PNCF and partitioned probabilistic neighbour selection), the Wallenius
//! analytics that forecast their accuracy and attack resistance, a kNN
//! attack simulator and a MovieLens MAE harness.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod parallel;
pub mod prediction;
pub mod privacy;
pub mod quadrature;
pub mod selection;
pub mod similarity;
pub mod strategy;
pub mod wallenius;

pub use dataset::{ItemId, Profile, RatingMatrix, TestPoint, UserId};
pub use error::{Error, Result};
pub use parallel::Execution;
pub use selection::{NeighbourSet, StrategyKind};
pub use similarity::{CandidateList, Metric};
pub use strategy::StrategyConfig;
