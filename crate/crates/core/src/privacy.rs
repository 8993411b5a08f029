//! Exponential-mechanism selection weights, the recommendation-aware
//! sensitivity of the similarity score, the PNCF truncation band λ, and
//! Laplace noise.

use rand::Rng;

use crate::dataset::{Profile, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::similarity::{corated, CandidateList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub k: usize,
    /// Sensitivity of the score function, usually estimated per target.
    pub rs: f64,
    pub rho: f64,
    /// Fixed sensitivity that replaces `rs` when set.
    pub rs_override: Option<f64>,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, k: usize, rs: f64, rho: f64) -> Result<Self> {
        let params = PrivacyParams {
            epsilon,
            k,
            rs,
            rho,
            rs_override: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_override(mut self, rs: Option<f64>) -> Result<Self> {
        self.rs_override = rs;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.rs > 0.0 && self.rs.is_finite()) {
            return Err(Error::param(format!("sensitivity must be positive, got {}", self.rs)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if let Some(rs) = self.rs_override {
            if !(rs > 0.0 && rs.is_finite()) {
                return Err(Error::param(format!("rs_override must be positive, got {rs}")));
            }
        }
        Ok(())
    }

    /// The sensitivity actually used: the override when present.
    pub fn sensitivity(&self) -> f64 {
        self.rs_override.unwrap_or(self.rs)
    }

    /// ε / (4k·RS), the exponent multiplier applied to each score.
    pub fn weight_scale(&self) -> f64 {
        self.epsilon / (4.0 * self.k as f64 * self.sensitivity())
    }
}

/// Sensitivity of the cosine score between two profiles, taking for every
/// co-rated item `s` the larger of
///
/// ```text
/// r_is·r_js / (‖r_i'‖‖r_j'‖)
/// r_is·r_js·(‖r_i‖‖r_j‖ − ‖r_i'‖‖r_j'‖) / (‖r_i‖‖r_j‖‖r_i'‖‖r_j'‖)
/// ```
///
/// where `r'` is the rating vector with item `s` removed. A term whose
/// reduced norm vanishes is capped at 1, the width of the cosine range.
pub fn pair_sensitivity(a: &Profile, b: &Profile) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    let mut worst: f64 = 0.0;
    for (_, x, y) in corated(a, b) {
        let (x, y) = (x as f64, y as f64);
        let ra = (a.sum_sq() as f64 - x * x).sqrt();
        let rb = (b.sum_sq() as f64 - y * y).sqrt();
        let reduced = ra * rb;
        if reduced == 0.0 {
            return 1.0;
        }
        let full = na * nb;
        let first = x * y / reduced;
        let second = x * y * (full - reduced) / (full * reduced);
        worst = worst.max(first).max(second);
    }
    worst.min(1.0)
}

pub fn recommendation_aware_sensitivity(matrix: &RatingMatrix, i: UserId, j: UserId) -> Result<f64> {
    let a = matrix.profile(i).ok_or(Error::UnknownUser(i))?;
    let b = matrix.profile(j).ok_or(Error::UnknownUser(j))?;
    Ok(pair_sensitivity(a, b))
}

/// Max pair sensitivity over every pair involving `target`, scored with the
/// supplied (possibly masked) target profile.
pub fn target_sensitivity(matrix: &RatingMatrix, target: UserId, profile: &Profile) -> f64 {
    matrix
        .user_ids()
        .iter()
        .enumerate()
        .filter(|&(_, &u)| u != target)
        .map(|(idx, _)| pair_sensitivity(profile, matrix.profile_at(idx)))
        .fold(0.0, f64::max)
}

/// `ω_i = exp(ε·sim(a,i) / (4k·RS))` for each candidate, in list order.
pub fn selection_weights(candidates: &CandidateList, params: &PrivacyParams) -> Vec<f64> {
    let scale = params.weight_scale();
    candidates.similarities().map(|s| (scale * s).exp()).collect()
}

/// `λ = min(sim_k, (4k·RS/ε)·ln(k(n−k)/ρ))`.
pub fn compute_lambda(sim_k: f64, n: usize, params: &PrivacyParams) -> Result<f64> {
    let k = params.k;
    if n <= k {
        return Err(Error::NotEnoughCandidates {
            needed: k + 1,
            available: n,
        });
    }
    if !(0.0..=1.0).contains(&sim_k) {
        return Err(Error::param(format!("sim_k must lie in [0, 1], got {sim_k}")));
    }
    let bound = ((k * (n - k)) as f64 / params.rho).ln() / params.weight_scale();
    Ok(sim_k.min(bound))
}

/// `value` plus a Laplace(0, sensitivity/epsilon) draw (inverse-CDF sampling).
pub fn laplace_noise<R: Rng + ?Sized>(value: f64, sensitivity: f64, epsilon: f64, rng: &mut R) -> Result<f64> {
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::param(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let scale = sensitivity / epsilon;
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u - 0.5;
        }
    };
    Ok(value - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataset::ItemId;
    use crate::similarity::{Candidate, Metric};

    fn params(epsilon: f64, k: usize, rs: f64, rho: f64) -> PrivacyParams {
        PrivacyParams::new(epsilon, k, rs, rho).unwrap()
    }

    fn toy() -> RatingMatrix {
        let rows = [
            (1, 1, 5),
            (1, 2, 3),
            (1, 3, 4),
            (2, 1, 4),
            (2, 2, 1),
            (2, 3, 2),
            (3, 1, 2),
            (3, 3, 5),
        ];
        RatingMatrix::from_triples(rows.iter().map(|&(u, i, r)| (UserId(u), ItemId(i), r))).unwrap()
    }

    /// Builds each neighbouring matrix explicitly (item `s` removed from both
    /// users) and evaluates the two sensitivity terms from its norms.
    fn brute_force_rs(m: &RatingMatrix, i: UserId, j: UserId) -> f64 {
        let norm = |m: &RatingMatrix, u: UserId| -> f64 {
            m.iter()
                .filter(|&(v, _, _)| v == u)
                .map(|(_, _, r)| (r as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let items: Vec<ItemId> = m
            .iter()
            .filter(|&(u, _, _)| u == i)
            .map(|(_, s, _)| s)
            .filter(|&s| m.rating(j, s).is_some())
            .collect();
        let mut best: f64 = 0.0;
        for s in items {
            let neighbour = RatingMatrix::from_triples(
                m.iter().filter(|&(u, item, _)| !(item == s && (u == i || u == j))),
            )
            .unwrap();
            let (ri, rj) = (m.rating(i, s).unwrap() as f64, m.rating(j, s).unwrap() as f64);
            let full = norm(m, i) * norm(m, j);
            let reduced = norm(&neighbour, i) * norm(&neighbour, j);
            best = best
                .max(ri * rj / reduced)
                .max(ri * rj * (full - reduced) / (full * reduced));
        }
        best.min(1.0)
    }

    /// Three users over ten items; long enough that no term reaches the cap.
    fn long_profiles() -> RatingMatrix {
        let mut rows = Vec::new();
        for u in 1..=3u32 {
            for i in 1..=10u32 {
                if (u + i) % 4 != 0 {
                    rows.push((UserId(u), ItemId(i), ((u * 7 + i * 3) % 5 + 1) as u8));
                }
            }
        }
        RatingMatrix::from_triples(rows).unwrap()
    }

    #[test]
    fn sensitivity_matches_neighbouring_matrices() {
        for m in [toy(), long_profiles()] {
            for (i, j) in [(1, 2), (1, 3), (2, 3)] {
                let got = recommendation_aware_sensitivity(&m, UserId(i), UserId(j)).unwrap();
                let want = brute_force_rs(&m, UserId(i), UserId(j));
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
                assert!(got > 0.0);
            }
        }
        let m = long_profiles();
        assert!(recommendation_aware_sensitivity(&m, UserId(1), UserId(2)).unwrap() < 1.0);
    }

    #[test]
    fn sensitivity_empty_corated_set() {
        let m = RatingMatrix::from_triples([(UserId(1), ItemId(1), 3), (UserId(2), ItemId(2), 3)]).unwrap();
        assert_eq!(recommendation_aware_sensitivity(&m, UserId(1), UserId(2)).unwrap(), 0.0);
    }

    #[test]
    fn override_replaces_estimate() {
        let p = params(1.0, 50, 0.37, 0.5).with_override(Some(1.0)).unwrap();
        assert_eq!(p.sensitivity(), 1.0);
        assert_abs_diff_eq!(p.weight_scale(), 1.0 / 200.0);
        assert!(params(1.0, 50, 0.37, 0.5).with_override(Some(0.0)).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(PrivacyParams::new(0.0, 5, 1.0, 0.5).is_err());
        assert!(PrivacyParams::new(1.0, 0, 1.0, 0.5).is_err());
        assert!(PrivacyParams::new(1.0, 5, 0.0, 0.5).is_err());
        assert!(PrivacyParams::new(1.0, 5, 1.0, 1.0).is_err());
    }

    fn list(sims: &[f64]) -> CandidateList {
        let entries = sims
            .iter()
            .enumerate()
            .map(|(i, &s)| Candidate {
                user: UserId(i as u32 + 2),
                similarity: s,
            })
            .collect();
        CandidateList::from_scores(UserId(1), Metric::Cosine, entries).unwrap()
    }

    #[test]
    fn weight_examples() {
        let p = params(1.0, 50, 1.0, 0.5);
        let w = selection_weights(&list(&[1.0, 0.5, 0.5, 0.0]), &p);
        assert_abs_diff_eq!(w[0], (1.0f64 / 200.0).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0050125, epsilon = 1e-7);
        assert_eq!(w[1], w[2]);
        assert_eq!(w[3], 1.0);
    }

    #[test]
    fn lambda_examples() {
        let p = params(1.0, 50, 1.0, 0.5);
        assert_eq!(compute_lambda(0.3, 943, &p).unwrap(), 0.3);
        assert_eq!(compute_lambda(0.0, 943, &p).unwrap(), 0.0);
        for rho in [0.1, 0.9] {
            assert_eq!(compute_lambda(0.3, 943, &params(1.0, 50, 1.0, rho)).unwrap(), 0.3);
        }
        assert!(compute_lambda(0.3, 50, &p).is_err());
        // the log term binds once the budget is large
        let loose = params(1e6, 50, 1.0, 0.5);
        let expected = 200.0 * (50.0f64 * 893.0 / 0.5).ln() / 1e6;
        assert_abs_diff_eq!(compute_lambda(0.3, 943, &loose).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn laplace_vanishing_scale_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = laplace_noise(3.25, 1.0, 1e12, &mut rng).unwrap();
        assert_abs_diff_eq!(v, 3.25, epsilon = 1e-6);

        let a = laplace_noise(0.0, 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = laplace_noise(0.0, 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        assert!(laplace_noise(0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(laplace_noise(0.0, 1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| laplace_noise(0.0, 1.0, 1.0, &mut rng).unwrap())
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.0).abs() < 0.2, "variance {var}");
    }

    proptest! {
        #[test]
        fn weights_positive_and_order_preserving(
            mut sims in prop::collection::vec(0.0f64..1.0, 1..40),
            epsilon in 0.01f64..20.0,
            k in 1usize..60,
            rs in 0.01f64..2.0,
        ) {
            sims.sort_by(|a, b| b.total_cmp(a));
            let w = selection_weights(&list(&sims), &params(epsilon, k, rs, 0.5));
            prop_assert!(w.iter().all(|&x| x > 0.0));
            for pair in w.windows(2) {
                prop_assert!(pair[0] >= pair[1]);
            }
        }

        #[test]
        fn lambda_monotone_in_sim_k(a in 0.0f64..1.0, b in 0.0f64..1.0, rho in 0.01f64..0.99) {
            let p = params(1.0, 20, 1.0, rho);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(compute_lambda(lo, 300, &p).unwrap() <= compute_lambda(hi, 300, &p).unwrap());
            prop_assert_eq!(compute_lambda(lo, 300, &p).unwrap(), lo);
        }
    }
}
