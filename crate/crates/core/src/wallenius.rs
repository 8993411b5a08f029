//! Weighted sampling without replacement, analysed through the multivariate
//! Wallenius non-central hypergeometric distribution.
//!
//! A population of `c` categories holds `m_i` individuals of weight `ω_i`;
//! each draw takes one remaining individual with probability proportional to
//! its weight. Randomised neighbour selection is the special case `m_i = 1`,
//! one category per candidate. From the distribution's mean this module
//! derives the expected similarity sum of a selection (α), the admissible
//! range of the PPNS parameter `p`, and the partition-depth forecast (β).

use crate::error::{Error, Result};
use crate::quadrature;
use crate::selection::{geometric_allocation, Partitioning};
use crate::similarity::CandidateList;

pub const PMF_TOLERANCE: f64 = 1e-10;
pub const PMF_MAX_EVALUATIONS: usize = 1_000_000;

const MEAN_TOLERANCE: f64 = 1e-12;
const MEAN_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct WalleniusSpec {
    counts: Vec<u32>,
    weights: Vec<f64>,
    draws: u32,
}

impl WalleniusSpec {
    pub fn new(counts: Vec<u32>, weights: Vec<f64>, draws: u32) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("category counts"));
        }
        if counts.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: counts.len(),
                actual: weights.len(),
            });
        }
        if counts.contains(&0) {
            return Err(Error::param("every category needs at least one individual"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::param(format!("category weights must be positive, got {w}")));
        }
        let total: u64 = counts.iter().map(|&m| m as u64).sum();
        if draws == 0 || draws as u64 > total {
            return Err(Error::param(format!("draws must lie in 1..={total}, got {draws}")));
        }
        Ok(WalleniusSpec { counts, weights, draws })
    }

    /// One individual per category, as in neighbour selection.
    pub fn units(weights: Vec<f64>, draws: u32) -> Result<Self> {
        let counts = vec![1; weights.len()];
        Self::new(counts, weights, draws)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn draws(&self) -> u32 {
        self.draws
    }

    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    pub fn population(&self) -> u64 {
        self.counts.iter().map(|&m| m as u64).sum()
    }

    fn check_counts(&self, x: &[u32]) -> Result<()> {
        if x.len() != self.counts.len() {
            return Err(Error::LengthMismatch {
                expected: self.counts.len(),
                actual: x.len(),
            });
        }
        if let Some(i) = (0..x.len()).find(|&i| x[i] > self.counts[i]) {
            return Err(Error::param(format!(
                "category {i}: {} taken from {} individuals",
                x[i], self.counts[i]
            )));
        }
        Ok(())
    }
}

/// Probability that the next draw hits each category, given the counts
/// already taken.
pub fn draw_probability(spec: &WalleniusSpec, taken: &[u32]) -> Result<Vec<f64>> {
    spec.check_counts(taken)?;
    let mass: Vec<f64> = spec
        .counts
        .iter()
        .zip(taken)
        .zip(&spec.weights)
        .map(|((&m, &x), &w)| (m - x) as f64 * w)
        .collect();
    let total: f64 = mass.iter().sum();
    if total == 0.0 {
        return Err(Error::Exhausted);
    }
    Ok(mass.into_iter().map(|v| v / total).collect())
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability of ending with exactly `x` individuals per category, as
/// `Π C(m_i, x_i) · ∫₀¹ Π (1 − t^{ω_i/d})^{x_i} dt` with `d = ω·(m − x)`.
pub fn wallenius_pmf(spec: &WalleniusSpec, x: &[u32]) -> Result<f64> {
    spec.check_counts(x)?;
    let drawn: u64 = x.iter().map(|&v| v as u64).sum();
    if drawn != spec.draws as u64 {
        return Err(Error::param(format!(
            "counts sum to {drawn}, expected {} draws",
            spec.draws
        )));
    }
    let d: f64 = spec
        .counts
        .iter()
        .zip(x)
        .zip(&spec.weights)
        .map(|((&m, &xi), &w)| w * (m - xi) as f64)
        .sum();
    if d == 0.0 {
        // the whole population was drawn
        return Ok(1.0);
    }
    let lambda: f64 = spec.counts.iter().zip(x).map(|(&m, &xi)| binomial(m, xi)).product();
    let factors: Vec<(f64, i32)> = spec
        .weights
        .iter()
        .zip(x)
        .filter(|(_, &xi)| xi > 0)
        .map(|(&w, &xi)| (w / d, xi as i32))
        .collect();
    let integrand = |t: f64| {
        let ln_t = t.ln();
        factors
            .iter()
            .map(|&(exponent, power)| (-(exponent * ln_t).exp_m1()).powi(power))
            .product::<f64>()
    };
    let integral = quadrature::integrate(integrand, 0.0, 1.0, PMF_TOLERANCE, PMF_MAX_EVALUATIONS)?;
    Ok(lambda * integral.value)
}

/// Approximate per-category mean counts after all draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub mu: Vec<f64>,
}

impl MeanVector {
    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }
}

/// Solves `(1 − μ_i/m_i)^{1/ω_i} = A` for a common `A ∈ (0, 1)` subject to
/// `Σ μ_i = draws`, by bisection on `g(A) = Σ m_i(1 − A^{ω_i}) − draws`.
pub fn approx_mean(spec: &WalleniusSpec) -> MeanVector {
    if spec.draws as u64 == spec.population() {
        return MeanVector {
            mu: spec.counts.iter().map(|&m| m as f64).collect(),
        };
    }
    let draws = spec.draws as f64;
    let means = |a: f64| -> Vec<f64> {
        let ln_a = a.ln();
        spec.counts
            .iter()
            .zip(&spec.weights)
            .map(|(&m, &w)| -(m as f64) * (w * ln_a).exp_m1())
            .collect()
    };
    let g = |a: f64| means(a).iter().sum::<f64>() - draws;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut a = 0.5;
    for _ in 0..MEAN_MAX_ITERATIONS {
        a = 0.5 * (lo + hi);
        let value = g(a);
        if value.abs() < MEAN_TOLERANCE {
            break;
        }
        if value > 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    MeanVector { mu: means(a) }
}

/// `α = Σ sim(a,i)·μ_i`.
pub fn expected_accuracy(candidates: &CandidateList, mean: &MeanVector) -> Result<f64> {
    if mean.mu.len() != candidates.len() {
        return Err(Error::LengthMismatch {
            expected: candidates.len(),
            actual: mean.mu.len(),
        });
    }
    Ok(candidates.similarities().zip(&mean.mu).map(|(s, m)| s * m).sum())
}

/// Expected selection count of each candidate under global weighted sampling.
pub fn global_selection_mean(weights: &[f64], k: usize) -> Result<MeanVector> {
    Ok(approx_mean(&WalleniusSpec::units(weights.to_vec(), k as u32)?))
}

/// Expected selection count of each candidate under PPNS: the within
/// partition quota means, plus the final draw spread over unvisited
/// partitions in proportion to weight.
pub fn ppns_selection_mean(weights: &[f64], k: usize, p: f64) -> Result<MeanVector> {
    let n = weights.len();
    if n < k {
        return Err(Error::NotEnoughCandidates { needed: k, available: n });
    }
    let parts = Partitioning::new(n, k)?;
    let quotas = geometric_allocation(k, p, parts.count())?;
    let mut mu = vec![0.0; n];
    if quotas == [k] {
        mu[..k].iter_mut().for_each(|m| *m = 1.0);
        return Ok(MeanVector { mu });
    }
    if quotas.len() >= parts.count() {
        return Err(Error::NotEnoughCandidates {
            needed: (quotas.len() + 1) * k,
            available: n,
        });
    }
    for (i, &quota) in quotas.iter().enumerate() {
        let range = parts.range(i + 1);
        let block = global_selection_mean(&weights[range.clone()], quota)?;
        mu[range].copy_from_slice(&block.mu);
    }
    let tail = parts.range(quotas.len() + 1).start;
    let mass: f64 = weights[tail..].iter().sum();
    for (m, w) in mu[tail..].iter_mut().zip(&weights[tail..]) {
        *m = w / mass;
    }
    Ok(MeanVector { mu })
}

/// Smallest `p` for which PPNS is guaranteed to beat global sampling on
/// accuracy: `1 − ((n − k)/n)^{ω₁}`.
pub fn p_lower_bound_security(n: usize, k: usize, omega_1: f64) -> Result<f64> {
    if n <= k {
        return Err(Error::NotEnoughCandidates {
            needed: k + 1,
            available: n,
        });
    }
    if !(omega_1 > 0.0 && omega_1.is_finite()) {
        return Err(Error::param(format!("omega_1 must be positive, got {omega_1}")));
    }
    Ok(1.0 - ((n - k) as f64 / n as f64).powf(omega_1))
}

/// Largest `p` that never returns the exact top-k set: `(k − 1)/k`.
pub fn p_upper_bound_security(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    Ok((k - 1) as f64 / k as f64)
}

/// `p = α₀ / Σ_{i≤k} sim(a,i)`, the least `p` that still guarantees an
/// expected similarity sum of `α₀`.
pub fn p_from_accuracy(alpha_0: f64, candidates: &CandidateList, k: usize) -> Result<f64> {
    if !(alpha_0 >= 0.0) {
        return Err(Error::param(format!("alpha_0 must be non-negative, got {alpha_0}")));
    }
    if candidates.len() < k {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            available: candidates.len(),
        });
    }
    let top = candidates.top_k_sum(k);
    if !(top > 0.0) {
        return Err(Error::param("top-k similarity sum must be positive"));
    }
    let p = alpha_0 / top;
    if p > 1.0 {
        return Err(Error::Unattainable {
            target: alpha_0,
            max: top,
        });
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityForecast {
    pub p: f64,
    /// First partition whose quota falls below one and a half neighbours.
    pub j: u32,
    pub beta_analytic: f64,
}

/// `j = ⌈1 + (ln 1.5 − ln(pk)) / ln(1 − p)⌉` (1 when `pk ≤ 1.5`) and
/// `β = (j − 1) + (1 − p)^{j−1}·k`.
pub fn predict_beta(p: f64, k: usize) -> Result<SecurityForecast> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("p must lie in (0, 1), got {p}")));
    }
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let pk = p * k as f64;
    let j = if pk <= 1.5 {
        1
    } else {
        (1.0 + (1.5f64.ln() - pk.ln()) / (1.0 - p).ln()).ceil() as u32
    };
    let beta_analytic = (j - 1) as f64 + (1.0 - p).powi(j as i32 - 1) * k as f64;
    Ok(SecurityForecast { p, j, beta_analytic })
}
