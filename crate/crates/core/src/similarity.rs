//! User–user similarity and the target's sorted candidate list.
//!
//! Two cosine variants are offered. [`Metric::Cosine`] divides the co-rated
//! dot product by the norms of the users' full rating vectors (the vector
//! form `r_i·r_j / (‖r_i‖‖r_j‖)`, missing ratings read as zero).
//! [`Metric::CosineCorated`] restricts the norms to the co-rated items too;
//! under it any pair sharing a single item scores 1, which swamps the top of
//! every candidate list on sparse data. Pearson uses full-profile means with
//! co-rated sums.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::dataset::{ItemId, Profile, RatingMatrix, UserId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    CosineCorated,
    Pearson,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::CosineCorated => "cosine-corated",
            Metric::Pearson => "pearson",
        }
    }

    /// Similarity between two rating profiles.
    pub fn between(self, a: &Profile, b: &Profile) -> f64 {
        match self {
            Metric::Cosine => cosine(a, b),
            Metric::CosineCorated => cosine_corated(a, b),
            Metric::Pearson => pearson(a, b),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "cosine-corated" | "cosine_corated" => Ok(Metric::CosineCorated),
            "pearson" => Ok(Metric::Pearson),
            other => Err(Error::param(format!("unknown similarity metric {other:?}"))),
        }
    }
}

/// Merge-join over two item-sorted profiles: `(item, r_a, r_b)` for every
/// co-rated item.
pub(crate) fn corated<'a>(
    a: &'a Profile,
    b: &'a Profile,
) -> impl Iterator<Item = (ItemId, u8, u8)> + 'a {
    let (mut xs, mut ys) = (a.entries().iter().peekable(), b.entries().iter().peekable());
    std::iter::from_fn(move || loop {
        let (&&(ia, ra), &&(ib, rb)) = (xs.peek()?, ys.peek()?);
        match ia.cmp(&ib) {
            Ordering::Less => {
                xs.next();
            }
            Ordering::Greater => {
                ys.next();
            }
            Ordering::Equal => {
                xs.next();
                ys.next();
                return Some((ia, ra, rb));
            }
        }
    })
}

fn cosine(a: &Profile, b: &Profile) -> f64 {
    let dot: u64 = corated(a, b).map(|(_, x, y)| x as u64 * y as u64).sum();
    if dot == 0 {
        return 0.0;
    }
    // integer product keeps the denominator exactly symmetric
    dot as f64 / ((a.sum_sq() * b.sum_sq()) as f64).sqrt()
}

fn cosine_corated(a: &Profile, b: &Profile) -> f64 {
    let (mut dot, mut sa, mut sb) = (0u64, 0u64, 0u64);
    for (_, x, y) in corated(a, b) {
        let (x, y) = (x as u64, y as u64);
        dot += x * y;
        sa += x * x;
        sb += y * y;
    }
    if dot == 0 {
        return 0.0;
    }
    dot as f64 / ((sa * sb) as f64).sqrt()
}

fn pearson(a: &Profile, b: &Profile) -> f64 {
    let (Some(ma), Some(mb)) = (a.mean(), b.mean()) else {
        return 0.0;
    };
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (_, x, y) in corated(a, b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        num += x * y;
        da += x * x;
        db += y * y;
    }
    let den = (da * db).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (num / den).clamp(-1.0, 1.0)
    }
}

fn pair<'m>(matrix: &'m RatingMatrix, i: UserId, j: UserId) -> Result<(&'m Profile, &'m Profile)> {
    let a = matrix.profile(i).ok_or(Error::UnknownUser(i))?;
    let b = matrix.profile(j).ok_or(Error::UnknownUser(j))?;
    Ok((a, b))
}

/// Items rated by both users.
pub fn corated_items(matrix: &RatingMatrix, i: UserId, j: UserId) -> Result<Vec<ItemId>> {
    let (a, b) = pair(matrix, i, j)?;
    if i == j {
        return Err(Error::SameUser(i));
    }
    Ok(corated(a, b).map(|(item, _, _)| item).collect())
}

pub fn cosine_similarity(matrix: &RatingMatrix, i: UserId, j: UserId) -> Result<f64> {
    let (a, b) = pair(matrix, i, j)?;
    Ok(cosine(a, b))
}

pub fn pearson_similarity(matrix: &RatingMatrix, i: UserId, j: UserId) -> Result<f64> {
    let (a, b) = pair(matrix, i, j)?;
    Ok(pearson(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub user: UserId,
    pub similarity: f64,
}

/// Every non-target user ranked by similarity to the target, descending,
/// ties broken by ascending user id.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    target: UserId,
    metric: Metric,
    entries: Vec<Candidate>,
}

fn rank_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.user.cmp(&b.user))
}

impl CandidateList {
    /// Sorts arbitrary scored candidates into a list. Rejects non-finite
    /// scores, duplicate users and the target itself.
    pub fn from_scores(target: UserId, metric: Metric, mut entries: Vec<Candidate>) -> Result<Self> {
        if entries.iter().any(|c| !c.similarity.is_finite()) {
            return Err(Error::param("candidate similarities must be finite"));
        }
        if entries.iter().any(|c| c.user == target) {
            return Err(Error::param(format!("target {target} listed as its own candidate")));
        }
        entries.sort_by(rank_order);
        let mut ids: Vec<UserId> = entries.iter().map(|c| c.user).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("duplicate candidate user"));
        }
        Ok(CandidateList {
            target,
            metric,
            entries,
        })
    }

    pub fn target(&self) -> UserId {
        self.target
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn similarities(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|c| c.similarity)
    }

    /// Σ of the k largest similarities.
    pub fn top_k_sum(&self, k: usize) -> f64 {
        self.entries.iter().take(k).map(|c| c.similarity).sum()
    }

    /// `rank,user_id,similarity` rows, 1-based rank, 6 decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rank,user_id,similarity")?;
        for (rank, c) in self.entries.iter().enumerate() {
            writeln!(out, "{},{},{:.6}", rank + 1, c.user, c.similarity)?;
        }
        Ok(())
    }

    /// Reads the [`Self::write_csv`] layout. The target id is not stored in
    /// the file and must be supplied.
    pub fn read_csv<R: BufRead>(reader: R, target: UserId, metric: Metric) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("rank")) {
                continue;
            }
            let bad = |what: &str| Error::Parse {
                line: idx + 1,
                message: format!("invalid {what} in {line:?}"),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad("row"));
            }
            let user = fields[1].parse().map_err(|_| bad("user_id"))?;
            let similarity = fields[2].trim().parse().map_err(|_| bad("similarity"))?;
            entries.push(Candidate { user, similarity });
        }
        Self::from_scores(target, metric, entries)
    }
}

/// Scores every other user against `target` using the matrix's own profile.
pub fn candidate_list(matrix: &RatingMatrix, target: UserId, metric: Metric) -> Result<CandidateList> {
    let idx = matrix.require(target)?;
    candidate_list_for(matrix, target, matrix.profile_at(idx), metric)
}

/// Like [`candidate_list`] but scores with a caller-supplied target profile,
/// e.g. one with the held-out rating masked.
pub fn candidate_list_for(
    matrix: &RatingMatrix,
    target: UserId,
    profile: &Profile,
    metric: Metric,
) -> Result<CandidateList> {
    matrix.require(target)?;
    if matrix.num_users() < 2 {
        return Err(Error::NotEnoughCandidates {
            needed: 1,
            available: 0,
        });
    }
    let entries = matrix
        .user_ids()
        .iter()
        .enumerate()
        .filter(|&(_, &u)| u != target)
        .map(|(idx, &user)| Candidate {
            user,
            similarity: metric.between(profile, matrix.profile_at(idx)),
        })
        .collect();
    CandidateList::from_scores(target, metric, entries)
}
