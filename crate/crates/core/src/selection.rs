//! Neighbour selection: deterministic top-k, global weighted sampling (nPNS),
//! PNCF's truncated sampling, and partitioned probabilistic selection (PPNS).
//!
//! All randomised strategies draw sequentially without replacement, each
//! draw picking a remaining candidate with probability proportional to its
//! weight. Candidate positions below are 0-based ranks into the
//! [`CandidateList`]; reported ranks and partition indices are 1-based.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;

use crate::dataset::UserId;
use crate::error::{Error, Result};
use crate::similarity::CandidateList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Knn,
    Npns,
    Pncf,
    Ppns,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Knn,
        StrategyKind::Ppns,
        StrategyKind::Npns,
        StrategyKind::Pncf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Knn => "knn",
            StrategyKind::Npns => "npns",
            StrategyKind::Pncf => "pncf",
            StrategyKind::Ppns => "ppns",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" => Ok(StrategyKind::Knn),
            "npns" => Ok(StrategyKind::Npns),
            "pncf" => Ok(StrategyKind::Pncf),
            "ppns" => Ok(StrategyKind::Ppns),
            other => Err(Error::param(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub user: UserId,
    pub similarity: f64,
    /// 1-based position in the candidate list.
    pub rank: usize,
    /// 1-based index of the size-k block holding `rank`.
    pub partition: usize,
}

/// The selected neighbours, ordered by rank.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourSet {
    target: UserId,
    members: Vec<Neighbour>,
    beta_observed: usize,
}

impl NeighbourSet {
    fn from_ranks(candidates: &CandidateList, k: usize, mut ranks: Vec<usize>) -> Self {
        ranks.sort_unstable();
        let members: Vec<Neighbour> = ranks
            .into_iter()
            .map(|r| {
                let c = candidates.entries()[r];
                Neighbour {
                    user: c.user,
                    similarity: c.similarity,
                    rank: r + 1,
                    partition: r / k + 1,
                }
            })
            .collect();
        let beta_observed = members.iter().map(|m| m.partition).max().unwrap_or(0);
        NeighbourSet {
            target: candidates.target(),
            members,
            beta_observed,
        }
    }

    pub fn target(&self) -> UserId {
        self.target
    }

    pub fn members(&self) -> &[Neighbour] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Deepest partition any member was drawn from.
    pub fn beta_observed(&self) -> usize {
        self.beta_observed
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.members.iter().any(|m| m.user == user)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.members.iter().map(|m| m.user)
    }

    /// Sum of member similarities (the realised accuracy metric).
    pub fn similarity_sum(&self) -> f64 {
        self.members.iter().map(|m| m.similarity).sum()
    }

    /// Rewrites member similarities in place, e.g. to add noise before
    /// aggregation. Membership and ranks are unchanged.
    pub fn map_similarities(&mut self, mut f: impl FnMut(f64) -> f64) {
        for m in &mut self.members {
            m.similarity = f(m.similarity);
        }
    }
}

/// The candidate list cut into consecutive blocks of `k`; the last block may
/// be shorter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partitioning {
    n: usize,
    k: usize,
}

impl Partitioning {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        Ok(Partitioning { n, k })
    }

    pub fn count(&self) -> usize {
        self.n.div_ceil(self.k)
    }

    /// 0-based rank range of the 1-based partition `index`.
    pub fn range(&self, index: usize) -> Range<usize> {
        let start = ((index - 1) * self.k).min(self.n);
        start..(start + self.k).min(self.n)
    }

    pub fn partitions(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (1..=self.count()).map(|i| self.range(i))
    }
}

fn check_inputs(candidates: &CandidateList, weights: &[f64], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if candidates.len() < k {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            available: candidates.len(),
        });
    }
    if weights.len() != candidates.len() {
        return Err(Error::LengthMismatch {
            expected: candidates.len(),
            actual: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::param(format!("selection weights must be positive and finite, got {w}")));
    }
    Ok(())
}

/// Moves `count` ranks from `pool` to `out`, each draw proportional to the
/// remaining weights. `pool` keeps its relative order.
fn draw_weighted<R: Rng + ?Sized>(
    pool: &mut Vec<usize>,
    weights: &[f64],
    count: usize,
    rng: &mut R,
    out: &mut Vec<usize>,
) {
    debug_assert!(count <= pool.len());
    for _ in 0..count {
        let total: f64 = pool.iter().map(|&r| weights[r]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (pos, &r) in pool.iter().enumerate() {
            u -= weights[r];
            if u < 0.0 {
                pick = pos;
                break;
            }
        }
        out.push(pool.remove(pick));
    }
}

pub fn select_topk(candidates: &CandidateList, k: usize) -> Result<NeighbourSet> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if candidates.len() < k {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            available: candidates.len(),
        });
    }
    Ok(NeighbourSet::from_ranks(candidates, k, (0..k).collect()))
}

/// Weighted sampling of `k` neighbours over the whole list.
pub fn select_global_probabilistic<R: Rng + ?Sized>(
    candidates: &CandidateList,
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<NeighbourSet> {
    check_inputs(candidates, weights, k)?;
    let mut pool: Vec<usize> = (0..candidates.len()).collect();
    let mut picked = Vec::with_capacity(k);
    draw_weighted(&mut pool, weights, k, rng, &mut picked);
    Ok(NeighbourSet::from_ranks(candidates, k, picked))
}

/// PNCF selection: candidates above `sim_k + λ` are taken outright,
/// candidates below `sim_k − λ` are dropped, and the rest of the k slots are
/// filled by weighted sampling from the band in between.
pub fn select_pncf<R: Rng + ?Sized>(
    candidates: &CandidateList,
    weights: &[f64],
    k: usize,
    lambda: f64,
    sim_k: f64,
    rng: &mut R,
) -> Result<NeighbourSet> {
    check_inputs(candidates, weights, k)?;
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("lambda must be non-negative, got {lambda}")));
    }
    let sims: Vec<f64> = candidates.similarities().collect();
    let mut picked: Vec<usize> = (0..sims.len())
        .filter(|&r| sims[r] > sim_k + lambda)
        .take(k)
        .collect();
    let mut band: Vec<usize> = (0..sims.len())
        .filter(|&r| sims[r] <= sim_k + lambda && sims[r] >= sim_k - lambda)
        .collect();
    let need = k - picked.len();
    if band.len() >= need {
        draw_weighted(&mut band, weights, need, rng, &mut picked);
    } else {
        let mut pool: Vec<usize> = (0..sims.len()).filter(|&r| sims[r] >= sim_k - lambda).collect();
        if pool.len() < k {
            return Err(Error::NotEnoughCandidates {
                needed: k,
                available: pool.len(),
            });
        }
        picked.clear();
        draw_weighted(&mut pool, weights, k, rng, &mut picked);
    }
    Ok(NeighbourSet::from_ranks(candidates, k, picked))
}

/// Per-partition quotas `⌈p(1−p)^{i−1}k⌉`, trimmed so the running total
/// stops at `k − 1`. When the first quota already reaches `k` the single
/// quota `[k]` is returned.
pub fn geometric_allocation(k: usize, p: f64, partition_count: usize) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("p must lie in (0, 1], got {p}")));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    // shave float noise so e.g. 0.98·50 is 49, not 49.000000000000007
    let quota = |i: i32| ((p * (1.0 - p).powi(i) * k as f64) - 1e-9).ceil().max(1.0) as usize;
    if quota(0) >= k {
        return Ok(vec![k]);
    }
    let mut quotas = Vec::new();
    let mut total = 0;
    while total < k - 1 {
        if quotas.len() == partition_count {
            return Err(Error::NotEnoughCandidates {
                needed: quotas.len() + 1,
                available: partition_count,
            });
        }
        let q = quota(quotas.len() as i32).min(k - 1 - total);
        quotas.push(q);
        total += q;
    }
    Ok(quotas)
}

/// Partitioned probabilistic neighbour selection.
///
/// Partition `i` contributes its geometric quota, drawn by weighted sampling
/// inside the partition, until `k − 1` members are chosen; the last member is
/// drawn by weight from every candidate in the partitions not yet visited.
/// With `p > (k−1)/k` the whole first partition is taken, reproducing top-k.
pub fn select_ppns<R: Rng + ?Sized>(
    candidates: &CandidateList,
    weights: &[f64],
    k: usize,
    p: f64,
    rng: &mut R,
) -> Result<NeighbourSet> {
    check_inputs(candidates, weights, k)?;
    let parts = Partitioning::new(candidates.len(), k)?;
    let quotas = geometric_allocation(k, p, parts.count())?;
    if quotas == [k] {
        return Ok(NeighbourSet::from_ranks(candidates, k, (0..k).collect()));
    }
    if quotas.len() >= parts.count() {
        // the final draw needs at least one partition left untouched
        return Err(Error::NotEnoughCandidates {
            needed: (quotas.len() + 1) * k,
            available: candidates.len(),
        });
    }
    let mut picked = Vec::with_capacity(k);
    for (i, &quota) in quotas.iter().enumerate() {
        let range = parts.range(i + 1);
        if range.len() < quota {
            return Err(Error::NotEnoughCandidates {
                needed: quota,
                available: range.len(),
            });
        }
        let mut pool: Vec<usize> = range.collect();
        draw_weighted(&mut pool, weights, quota, rng, &mut picked);
    }
    let mut unvisited: Vec<usize> = (parts.range(quotas.len() + 1).start..candidates.len()).collect();
    draw_weighted(&mut unvisited, weights, 1, rng, &mut picked);
    Ok(NeighbourSet::from_ranks(candidates, k, picked))
}
