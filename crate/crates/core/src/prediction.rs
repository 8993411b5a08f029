use crate::dataset::{ItemId, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::selection::NeighbourSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    Neighbours,
    UserMean,
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub user: UserId,
    pub item: ItemId,
    pub value: f64,
    /// Members that rated the item and entered the weighted average.
    pub neighbours_used: usize,
    pub source: PredictionSource,
}

/// Means used when no selected neighbour rated the item.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fallback {
    pub user_mean: Option<f64>,
    pub global_mean: Option<f64>,
}

impl Fallback {
    pub fn from_matrix(matrix: &RatingMatrix, user: UserId) -> Self {
        Fallback {
            user_mean: matrix.profile(user).and_then(|p| p.mean()),
            global_mean: matrix.global_mean(),
        }
    }
}

/// `Σ sim(a,i)·r_ix / Σ |sim(a,i)|` over the members that rated `item`.
pub fn predict_rating(matrix: &RatingMatrix, neighbours: &NeighbourSet, item: ItemId) -> Result<Prediction> {
    let fallback = Fallback::from_matrix(matrix, neighbours.target());
    predict_with_fallback(matrix, neighbours, item, fallback)
}

pub fn predict_with_fallback(
    matrix: &RatingMatrix,
    neighbours: &NeighbourSet,
    item: ItemId,
    fallback: Fallback,
) -> Result<Prediction> {
    if neighbours.is_empty() {
        return Err(Error::Empty("neighbour set"));
    }
    let (mut num, mut den, mut used) = (0.0, 0.0, 0);
    for m in neighbours.members() {
        if let Some(r) = matrix.rating(m.user, item) {
            num += m.similarity * r as f64;
            den += m.similarity.abs();
            used += 1;
        }
    }
    let (value, source) = if used > 0 && den > 0.0 {
        (num / den, PredictionSource::Neighbours)
    } else if let Some(mean) = fallback.user_mean {
        (mean, PredictionSource::UserMean)
    } else if let Some(mean) = fallback.global_mean {
        (mean, PredictionSource::GlobalMean)
    } else {
        return Err(Error::EmptyMatrix);
    };
    Ok(Prediction {
        user: neighbours.target(),
        item,
        value,
        neighbours_used: used,
        source,
    })
}
