//! kNN and β-kNN attack simulation.
//!
//! The attacker knows `m` of the target's ratings and injects `β·k` fake
//! users who rate exactly those items with the target's values. If a fake's
//! neighbour set ends up holding only other fakes plus the target, every
//! prediction served to that fake relays the target's ratings.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ItemId, NewProfile, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::parallel::{try_map_indices, Execution};
use crate::privacy::target_sensitivity;
use crate::similarity::{candidate_list, Metric};
use crate::strategy::StrategyConfig;

pub const DEFAULT_KNOWN_ITEMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub target: UserId,
    /// Ratings of the target the attacker already knows.
    pub known_items: usize,
    /// Fakes injected per trial, in multiples of `k`.
    pub budget_multiplier: usize,
    pub strategy: StrategyConfig,
    pub metric: Metric,
    pub trials: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl AttackConfig {
    pub fn new(target: UserId, strategy: StrategyConfig) -> Self {
        AttackConfig {
            target,
            known_items: DEFAULT_KNOWN_ITEMS,
            budget_multiplier: 1,
            strategy,
            metric: Metric::default(),
            trials: 1000,
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn fakes(&self) -> usize {
        self.budget_multiplier * self.strategy.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("attack needs at least one trial"));
        }
        if self.budget_multiplier == 0 {
            return Err(Error::param("budget multiplier must be at least 1"));
        }
        if self.known_items == 0 {
            return Err(Error::param("the attacker must know at least one rating"));
        }
        self.strategy.privacy(1.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackReport {
    /// Share of trials whose neighbour set contained the target.
    pub exposure_rate: f64,
    /// Share of trials whose neighbour set was the target plus fakes only.
    pub full_reconstruction_rate: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TrialOutcome {
    exposed: bool,
    reconstructed: bool,
}

fn forge_with<R: Rng + ?Sized>(
    matrix: &RatingMatrix,
    target: UserId,
    m: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<NewProfile>> {
    let profile = matrix.profile(target).ok_or(Error::UnknownUser(target))?;
    if m == 0 || m > profile.len() {
        return Err(Error::param(format!(
            "cannot copy {m} ratings from a profile of {}",
            profile.len()
        )));
    }
    if count == 0 {
        return Err(Error::param("forge at least one profile"));
    }
    let mut picks = index::sample(rng, profile.len(), m).into_vec();
    picks.sort_unstable();
    let copied: Vec<(ItemId, u8)> = picks.into_iter().map(|i| profile.entries()[i]).collect();
    let first = matrix.next_user_id().0;
    Ok((0..count as u32)
        .map(|i| (UserId(first + i), copied.clone()))
        .collect())
}

/// `count` identical fake profiles, each copying the same `m` randomly chosen
/// ratings of `target`. Fake ids follow the largest id in `matrix`.
pub fn forge_profiles(
    matrix: &RatingMatrix,
    target: UserId,
    m: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<NewProfile>> {
    forge_with(matrix, target, m, count, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn run_trial(matrix: &RatingMatrix, config: &AttackConfig, trial: usize) -> Result<TrialOutcome> {
    let mut rng = trial_rng(config.seed, trial);
    let fakes = forge_with(matrix, config.target, config.known_items, config.fakes(), &mut rng)?;
    let injected = matrix.inject_profiles(&fakes)?;
    let probe = fakes[0].0;
    let candidates = candidate_list(&injected, probe, config.metric)?;
    let rs = match config.strategy.rs_override {
        Some(rs) => rs,
        None => {
            let profile = injected.profile(probe).ok_or(Error::UnknownUser(probe))?;
            target_sensitivity(&injected, probe, profile)
        }
    };
    let set = config.strategy.select(&candidates, rs, &mut rng)?;
    let exposed = set.contains(config.target);
    let first_fake = fakes[0].0;
    let conspirator = |u: UserId| u == config.target || u >= first_fake;
    Ok(TrialOutcome {
        exposed,
        reconstructed: exposed && set.users().all(conspirator),
    })
}

/// Repeats the attack `config.trials` times, each trial on a fresh copy of
/// `matrix` with its own fakes and random stream.
pub fn run_attack(matrix: &RatingMatrix, config: &AttackConfig) -> Result<AttackReport> {
    config.validate()?;
    matrix.require(config.target)?;
    let outcomes = try_map_indices(config.execution, config.trials, |t| run_trial(matrix, config, t))?;
    let trials = outcomes.len();
    let exposed = outcomes.iter().filter(|o| o.exposed).count();
    let reconstructed = outcomes.iter().filter(|o| o.reconstructed).count();
    Ok(AttackReport {
        exposure_rate: exposed as f64 / trials as f64,
        full_reconstruction_rate: reconstructed as f64 / trials as f64,
        trials,
    })
}

pub const TOY_TARGET: UserId = UserId(1);
const TOY_TARGET_ITEMS: u32 = 20;

/// A matrix on which the attack's ranking is known in advance: user 1 rates
/// items 1..=20, and `honest` further users each rate three private items
/// nobody else touches. Fakes copied from user 1 score 1 against each other,
/// strictly between 0 and 1 against user 1, and 0 against everyone else.
pub fn toy_matrix(honest: usize) -> RatingMatrix {
    let mut rows: Vec<(UserId, ItemId, u8)> = (1..=TOY_TARGET_ITEMS)
        .map(|i| (TOY_TARGET, ItemId(i), (i % 5 + 1) as u8))
        .collect();
    for h in 0..honest as u32 {
        let user = UserId(h + 2);
        for j in 0..3 {
            rows.push((user, ItemId(1000 + 3 * h + j), (j + 2) as u8));
        }
    }
    RatingMatrix::from_triples(rows).expect("toy rows are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::StrategyKind;

    fn config(kind: StrategyKind, k: usize, beta: usize, trials: usize) -> AttackConfig {
        let strategy = StrategyConfig {
            kind,
            k,
            ..StrategyConfig::default()
        };
        AttackConfig {
            budget_multiplier: beta,
            trials,
            seed: 17,
            ..AttackConfig::new(TOY_TARGET, strategy)
        }
    }

    #[test]
    fn forged_profiles_share_items() {
        let m = toy_matrix(5);
        let fakes = forge_profiles(&m, TOY_TARGET, 8, 50, 4).unwrap();
        assert_eq!(fakes.len(), 50);
        assert!(fakes.iter().all(|f| f.1 == fakes[0].1 && f.1.len() == 8));
        let target = m.profile(TOY_TARGET).unwrap();
        assert!(fakes[0].1.iter().all(|&(i, r)| target.rating(i) == Some(r)));
        assert_eq!(fakes[0].0, m.next_user_id());
        assert_eq!(fakes, forge_profiles(&m, TOY_TARGET, 8, 50, 4).unwrap());

        let all = forge_profiles(&m, TOY_TARGET, 20, 2, 0).unwrap();
        assert_eq!(all[0].1, target.entries());
        assert!(forge_profiles(&m, TOY_TARGET, 21, 2, 0).is_err());
        assert!(forge_profiles(&m, TOY_TARGET, 8, 0, 0).is_err());
    }

    #[test]
    fn toy_ranking() {
        let m = toy_matrix(30);
        let fakes = forge_profiles(&m, TOY_TARGET, 8, 10, 1).unwrap();
        let injected = m.inject_profiles(&fakes).unwrap();
        let c = candidate_list(&injected, fakes[0].0, Metric::Cosine).unwrap();
        let sims: Vec<f64> = c.similarities().collect();
        assert!(sims[..9].iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert_eq!(c.entries()[9].user, TOY_TARGET);
        assert!(sims[9] > 0.0 && sims[9] < 1.0);
        assert!(sims[10..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn knn_attack_succeeds() {
        let r = run_attack(&toy_matrix(100), &config(StrategyKind::Knn, 10, 1, 20)).unwrap();
        assert_eq!((r.exposure_rate, r.full_reconstruction_rate), (1.0, 1.0));
        // a larger budget pushes the target out of plain top-k
        let r = run_attack(&toy_matrix(100), &config(StrategyKind::Knn, 10, 2, 5)).unwrap();
        assert_eq!(r.exposure_rate, 0.0);
    }

    #[test]
    fn ppns_never_reconstructs() {
        let r = run_attack(&toy_matrix(200), &config(StrategyKind::Ppns, 10, 1, 500)).unwrap();
        assert_eq!(r.full_reconstruction_rate, 0.0);
        assert!(r.exposure_rate > 0.0 && r.exposure_rate < 1.0);
    }

    #[test]
    fn validation() {
        let m = toy_matrix(20);
        assert!(run_attack(&m, &config(StrategyKind::Knn, 5, 1, 0)).is_err());
        assert!(run_attack(&m, &config(StrategyKind::Knn, 5, 0, 3)).is_err());
        let mut c = config(StrategyKind::Knn, 5, 1, 3);
        c.target = UserId(999);
        assert!(run_attack(&m, &c).is_err());
    }
}
