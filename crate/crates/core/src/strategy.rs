//! One entry point for the four selection strategies, shared by the
//! experiment runner, the attack simulator and the CLI.

use rand::Rng;

use crate::error::Result;
use crate::privacy::{compute_lambda, laplace_noise, selection_weights, PrivacyParams};
use crate::selection::{
    select_global_probabilistic, select_pncf, select_ppns, select_topk, NeighbourSet, StrategyKind,
};
use crate::similarity::CandidateList;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub k: usize,
    pub p: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub rs_override: Option<f64>,
    /// Laplace noise on the similarities of PNCF's selected neighbours.
    pub pncf_noise: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Ppns,
            k: 50,
            p: 0.5,
            epsilon: 1.0,
            rho: 0.5,
            rs_override: None,
            pncf_noise: true,
        }
    }
}

impl StrategyConfig {
    pub fn with_kind(self, kind: StrategyKind) -> Self {
        StrategyConfig { kind, ..self }
    }

    /// Privacy parameters for one target whose estimated sensitivity is `rs`.
    pub fn privacy(&self, rs: f64) -> Result<PrivacyParams> {
        PrivacyParams::new(self.epsilon, self.k, rs, self.rho)?.with_override(self.rs_override)
    }

    /// Runs the configured strategy on `candidates`. `rs` is ignored when an
    /// override is set and by top-k.
    pub fn select<R: Rng + ?Sized>(&self, candidates: &CandidateList, rs: f64, rng: &mut R) -> Result<NeighbourSet> {
        if self.kind == StrategyKind::Knn {
            return select_topk(candidates, self.k);
        }
        // an all-zero profile has no sensitivity; any positive value keeps the weights flat
        let rs = if rs > 0.0 { rs } else { 1.0 };
        let params = self.privacy(rs)?;
        let weights = selection_weights(candidates, &params);
        match self.kind {
            StrategyKind::Knn => unreachable!(),
            StrategyKind::Npns => select_global_probabilistic(candidates, &weights, self.k, rng),
            StrategyKind::Ppns => select_ppns(candidates, &weights, self.k, self.p, rng),
            StrategyKind::Pncf => {
                let sim_k = candidates
                    .entries()
                    .get(self.k - 1)
                    .map_or(0.0, |c| c.similarity.clamp(0.0, 1.0));
                let lambda = compute_lambda(sim_k, candidates.len(), &params)?;
                let mut set = select_pncf(candidates, &weights, self.k, lambda, sim_k, rng)?;
                if self.pncf_noise {
                    let sens = params.sensitivity();
                    let mut noisy = Ok(());
                    set.map_similarities(|s| match laplace_noise(s, sens, self.epsilon, rng) {
                        Ok(v) => v,
                        Err(e) => {
                            noisy = Err(e);
                            s
                        }
                    });
                    noisy?;
                }
                Ok(set)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataset::UserId;
    use crate::similarity::{Candidate, Metric};

    fn list(n: usize) -> CandidateList {
        let entries = (0..n)
            .map(|i| Candidate {
                user: UserId(i as u32 + 2),
                similarity: 1.0 - i as f64 / n as f64,
            })
            .collect();
        CandidateList::from_scores(UserId(1), Metric::Cosine, entries).unwrap()
    }

    #[test]
    fn every_kind_returns_k() {
        let c = list(60);
        let base = StrategyConfig {
            k: 5,
            ..StrategyConfig::default()
        };
        for kind in StrategyKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let set = base.with_kind(kind).select(&c, 1.0, &mut rng).unwrap();
            assert_eq!(set.len(), 5, "{kind}");
        }
    }

    #[test]
    fn pncf_noise_changes_similarities_only() {
        let c = list(60);
        let cfg = StrategyConfig {
            kind: StrategyKind::Pncf,
            k: 5,
            ..StrategyConfig::default()
        };
        let quiet = StrategyConfig { pncf_noise: false, ..cfg };
        let noisy = cfg.select(&c, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let plain = quiet.select(&c, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let users = |s: &NeighbourSet| s.users().collect::<Vec<_>>();
        assert_eq!(users(&noisy), users(&plain));
        assert_ne!(noisy.similarity_sum(), plain.similarity_sum());
    }

    #[test]
    fn knn_ignores_rng_and_sensitivity() {
        let c = list(20);
        let cfg = StrategyConfig {
            kind: StrategyKind::Knn,
            k: 4,
            ..StrategyConfig::default()
        };
        let a = cfg.select(&c, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = cfg.select(&c, 7.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }
}
