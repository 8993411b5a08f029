#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::OnceLock;

use ppns::wallenius::WalleniusSpec;
use ppns::{CandidateList, Metric, RatingMatrix, UserId};
use ppns::similarity::Candidate;

/// MovieLens 100K `u.data`, from `$PPNS_MOVIELENS` or `<workspace>/data/u.data`.
pub fn movielens_path() -> PathBuf {
    std::env::var_os("PPNS_MOVIELENS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/u.data"))
}

pub fn movielens() -> &'static RatingMatrix {
    static MATRIX: OnceLock<RatingMatrix> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let path = movielens_path();
        let file = File::open(&path).unwrap_or_else(|e| {
            panic!(
                "MovieLens 100K not found at {} ({e}); place u.data there or set PPNS_MOVIELENS",
                path.display()
            )
        });
        RatingMatrix::parse(BufReader::new(file)).expect("u.data parses")
    })
}

pub fn candidates(sims: &[f64]) -> CandidateList {
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

/// Exact final-count distribution by walking every sequence of draws, each
/// step taking category `i` with probability `(m_i − x_i)ω_i / Σ_j (m_j − x_j)ω_j`.
pub fn enumerate_draws(spec: &WalleniusSpec) -> BTreeMap<Vec<u32>, f64> {
    fn walk(
        m: &[u32],
        w: &[f64],
        left: u32,
        x: &mut Vec<u32>,
        prob: f64,
        out: &mut BTreeMap<Vec<u32>, f64>,
    ) {
        if left == 0 {
            *out.entry(x.clone()).or_insert(0.0) += prob;
            return;
        }
        let total: f64 = (0..m.len()).map(|i| (m[i] - x[i]) as f64 * w[i]).sum();
        for i in 0..m.len() {
            if x[i] < m[i] {
                let step = (m[i] - x[i]) as f64 * w[i] / total;
                x[i] += 1;
                walk(m, w, left - 1, x, prob * step, out);
                x[i] -= 1;
            }
        }
    }
    let mut out = BTreeMap::new();
    let mut x = vec![0; spec.categories()];
    walk(spec.counts(), spec.weights(), spec.draws(), &mut x, 1.0, &mut out);
    out
}

/// Every count vector with `0 ≤ x_i ≤ m_i` and `Σx = draws`.
pub fn outcomes(m: &[u32], draws: u32) -> Vec<Vec<u32>> {
    fn rec(m: &[u32], left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == m.len() {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for v in 0..=m[prefix.len()].min(left) {
            prefix.push(v);
            rec(m, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, draws, &mut Vec::new(), &mut out);
    out
}

/// Ordered compositions of `total` into positive parts.
pub fn compositions(total: u32) -> Vec<Vec<u32>> {
    if total == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=total {
        for mut rest in compositions(total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

const WEIGHTS: [f64; 8] = [1.0, 2.5, 0.4, 3.7, 1.3, 0.8, 6.0, 0.15];

/// Every spec with population `N ≤ max_population`: each composition of `N`
/// into category counts, each number of draws, with distinct weights and
/// with equal weights.
pub fn small_specs(max_population: u32) -> Vec<WalleniusSpec> {
    let mut specs = Vec::new();
    for n in 1..=max_population {
        for counts in compositions(n) {
            let c = counts.len();
            for draws in 1..=n {
                let distinct = WEIGHTS[..c].to_vec();
                specs.push(WalleniusSpec::new(counts.clone(), distinct, draws).unwrap());
                if c > 1 {
                    specs.push(WalleniusSpec::new(counts.clone(), vec![1.7; c], draws).unwrap());
                }
            }
        }
    }
    specs
}
