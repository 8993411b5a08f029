//! MAE experiments on a rating matrix.
//!
//! Each trial holds out one stored rating, masks it from the target's
//! profile, scores every other user against the masked profile, selects
//! neighbours and predicts the held-out rating. Every (grid point, strategy)
//! row sees the same test points and the same per-trial random streams.
//!
//! Seeding: test points come from stream 0 of `ChaCha8Rng::seed_from_u64(seed)`;
//! trial `t` selects with stream `t + 1` of the same seed.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{RatingMatrix, TestPoint, UserId};
use crate::error::{Error, Result};
use crate::parallel::{try_map_indices, Execution};
use crate::prediction::{predict_with_fallback, Fallback};
use crate::privacy::target_sensitivity;
use crate::selection::StrategyKind;
use crate::similarity::{candidate_list_for, Candidate, CandidateList, Metric};
use crate::strategy::StrategyConfig;
use crate::wallenius::predict_beta;

pub const REPORT_HEADER: &str = "strategy,sweep_var,sweep_value,mae,beta,trials,seconds";
pub const PLOT_HEADER: &str = "figure,strategy,x_var,x,y_var,y";

const CHUNK: usize = 256;

/// Mean absolute error over `(truth, prediction)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    Ok(pairs.iter().map(|(t, p)| (t - p).abs()).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepVar {
    #[default]
    P,
    K,
    Rho,
    /// A `p` grid whose interesting output is the observed partition depth.
    Beta,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::P => "p",
            SweepVar::K => "k",
            SweepVar::Rho => "rho",
            SweepVar::Beta => "beta",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" => Ok(SweepVar::P),
            "k" => Ok(SweepVar::K),
            "rho" => Ok(SweepVar::Rho),
            "beta" => Ok(SweepVar::Beta),
            other => Err(Error::param(format!("unknown sweep variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub strategies: Vec<StrategyKind>,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    /// Fixed parameters; the swept one is overwritten per grid point.
    pub base: StrategyConfig,
    pub metric: Metric,
    pub seed: u64,
    pub trials: usize,
    pub execution: Execution,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            strategies: StrategyKind::ALL.to_vec(),
            sweep: SweepVar::P,
            values: vec![0.5],
            base: StrategyConfig::default(),
            metric: Metric::default(),
            seed: 0,
            trials: 10_000,
            execution: Execution::default(),
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unknown keys are
    /// errors. Missing keys keep their defaults.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let text = line.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| Error::Config {
                line: lineno,
                message: format!("expected key = value, got {text:?}"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config {
                    line: lineno,
                    message: e.to_string(),
                })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::param(format!("{key}: invalid {what} {value:?}"));
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "strategies" => self.strategies = parse_list(value)?,
            "sweep" => self.sweep = value.parse()?,
            "values" => self.values = parse_list(value).map_err(|_| bad("number list"))?,
            "epsilon" => self.base.epsilon = value.parse().map_err(|_| bad("number"))?,
            "k" => self.base.k = value.parse().map_err(|_| bad("integer"))?,
            "p" => self.base.p = value.parse().map_err(|_| bad("number"))?,
            "rho" => self.base.rho = value.parse().map_err(|_| bad("number"))?,
            "rs_override" => {
                self.base.rs_override = match value {
                    "" | "auto" | "none" => None,
                    v => Some(v.parse().map_err(|_| bad("number"))?),
                }
            }
            "pncf_noise" => self.base.pncf_noise = value.parse().map_err(|_| bad("boolean"))?,
            "metric" => self.metric = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("integer"))?,
            "execution" => self.execution = value.parse()?,
            other => return Err(Error::param(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Empty("strategy set"));
        }
        if self.values.is_empty() {
            return Err(Error::Empty("sweep grid"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        for &v in &self.values {
            let point = self.point(v)?;
            point.privacy(1.0)?;
            if !(point.p > 0.0 && point.p <= 1.0) {
                return Err(Error::param(format!("p must lie in (0, 1], got {}", point.p)));
            }
        }
        Ok(())
    }

    /// The strategy parameters at one grid value.
    pub fn point(&self, value: f64) -> Result<StrategyConfig> {
        let mut cfg = self.base;
        match self.sweep {
            SweepVar::P | SweepVar::Beta => cfg.p = value,
            SweepVar::Rho => cfg.rho = value,
            SweepVar::K => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::param(format!("k grid values must be positive integers, got {value}")));
                }
                cfg.k = value as usize;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: StrategyKind,
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub mae: f64,
    /// Mean over trials of the deepest partition a selected neighbour came from.
    pub beta: f64,
    /// `predict_beta` at this grid point, for PPNS with `0 < p < 1`.
    pub beta_analytic: Option<f64>,
    pub trials: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find(&self, strategy: StrategyKind, sweep_value: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.sweep_value == sweep_value)
    }
}

/// A finished run: the table plus every trial's absolute error, aligned with
/// the table rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub table: ReportTable,
    pub errors: Vec<Vec<f64>>,
}

/// A run stopped at a failing grid point; `completed` holds the rows that
/// come before it.
#[derive(Debug)]
pub struct ExperimentFailure {
    pub completed: ReportTable,
    pub strategy: StrategyKind,
    pub sweep_value: f64,
    pub error: Error,
}

impl fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at grid value {} failed after {} completed rows: {}",
            self.strategy,
            self.sweep_value,
            self.completed.len(),
            self.error
        )
    }
}

impl std::error::Error for ExperimentFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct TrialContext {
    point: TestPoint,
    candidates: CandidateList,
    rs: f64,
    fallback: Fallback,
}

fn build_context(matrix: &RatingMatrix, config: &ExperimentConfig, point: TestPoint) -> Result<TrialContext> {
    let profile = matrix.profile(point.user).ok_or(Error::UnknownUser(point.user))?;
    let masked = profile.without(point.item);
    let candidates = candidate_list_for(matrix, point.user, &masked, config.metric)?;
    let rs = match config.base.rs_override {
        Some(rs) => rs,
        None => target_sensitivity(matrix, point.user, &masked),
    };
    Ok(TrialContext {
        point,
        candidates,
        rs,
        fallback: Fallback {
            user_mean: masked.mean(),
            global_mean: matrix.global_mean(),
        },
    })
}

fn selection_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// (absolute error, observed β) for one row on one trial.
fn evaluate(
    matrix: &RatingMatrix,
    strategy: &StrategyConfig,
    ctx: &TrialContext,
    seed: u64,
    trial: usize,
) -> Result<(f64, usize)> {
    let mut rng = selection_rng(seed, trial);
    let set = strategy.select(&ctx.candidates, ctx.rs, &mut rng)?;
    let prediction = predict_with_fallback(matrix, &set, ctx.point.item, ctx.fallback)?;
    Ok(((ctx.point.rating as f64 - prediction.value).abs(), set.beta_observed()))
}

/// A stand-in list with the same length as every real one, for checking
/// structural preconditions before the run.
fn probe_list(matrix: &RatingMatrix) -> Result<CandidateList> {
    let n = matrix.num_users().saturating_sub(1);
    let entries = (0..n)
        .map(|i| Candidate {
            user: UserId(i as u32 + 1),
            similarity: 1.0 - i as f64 / n.max(1) as f64,
        })
        .collect();
    CandidateList::from_scores(UserId(0), Metric::Cosine, entries)
}

/// Runs every (grid point, strategy) row for `config.trials` trials.
pub fn run_experiment(
    config: &ExperimentConfig,
    matrix: &RatingMatrix,
) -> std::result::Result<Experiment, Box<ExperimentFailure>> {
    let fail = |completed: ReportTable, strategy, sweep_value, error| {
        Box::new(ExperimentFailure {
            completed,
            strategy,
            sweep_value,
            error,
        })
    };
    let first = config.strategies[0];
    let first_value = config.values.first().copied().unwrap_or(f64::NAN);
    if let Err(e) = config.validate() {
        return Err(fail(ReportTable::default(), first, first_value, e));
    }

    // rows in output order, stopping at the first one that cannot run
    let mut rows: Vec<(StrategyKind, f64, StrategyConfig)> = Vec::new();
    let mut blocked = None;
    let probe = probe_list(matrix).map_err(|e| fail(ReportTable::default(), first, first_value, e))?;
    'grid: for &value in &config.values {
        for &kind in &config.strategies {
            let point = match config.point(value) {
                Ok(p) => p.with_kind(kind),
                Err(e) => {
                    blocked = Some((kind, value, e));
                    break 'grid;
                }
            };
            let mut rng = selection_rng(config.seed, 0);
            if let Err(e) = point.select(&probe, 1.0, &mut rng) {
                blocked = Some((kind, value, e));
                break 'grid;
            }
            rows.push((kind, value, point));
        }
    }

    let points = matrix
        .holdout_points(config.trials, config.seed)
        .map_err(|e| fail(ReportTable::default(), first, first_value, e))?;
    let mut errors: Vec<Vec<f64>> = vec![Vec::with_capacity(config.trials); rows.len()];
    let mut betas: Vec<u64> = vec![0; rows.len()];
    let mut seconds = vec![0.0; rows.len()];

    for start in (0..points.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(points.len());
        let clock = Instant::now();
        let contexts = try_map_indices(config.execution, end - start, |i| {
            build_context(matrix, config, points[start + i])
        })
        .map_err(|e| fail(ReportTable::default(), first, first_value, e))?;
        let shared = clock.elapsed().as_secs_f64() / rows.len().max(1) as f64;
        for (r, (kind, value, point)) in rows.iter().enumerate() {
            let clock = Instant::now();
            let results = try_map_indices(config.execution, contexts.len(), |i| {
                evaluate(matrix, point, &contexts[i], config.seed, start + i)
            })
            .map_err(|e| fail(ReportTable::default(), *kind, *value, e))?;
            for (err, beta) in results {
                errors[r].push(err);
                betas[r] += beta as u64;
            }
            seconds[r] += shared + clock.elapsed().as_secs_f64();
        }
    }

    let trials = points.len();
    let table = ReportTable {
        rows: rows
            .iter()
            .enumerate()
            .map(|(r, &(kind, value, point))| ReportRow {
                strategy: kind,
                sweep_var: config.sweep,
                sweep_value: value,
                mae: errors[r].iter().sum::<f64>() / trials as f64,
                beta: betas[r] as f64 / trials as f64,
                beta_analytic: (kind == StrategyKind::Ppns)
                    .then(|| predict_beta(point.p, point.k).ok().map(|f| f.beta_analytic))
                    .flatten(),
                trials,
                seconds: seconds[r],
            })
            .collect(),
    };
    match blocked {
        Some((kind, value, error)) => Err(fail(table, kind, value, error)),
        None => Ok(Experiment { table, errors }),
    }
}

/// Writes the table as CSV with [`REPORT_HEADER`]; returns bytes written.
pub fn emit_report<W: Write>(table: &ReportTable, mut out: W) -> Result<usize> {
    if table.is_empty() {
        return Err(Error::Empty("report table"));
    }
    let mut text = String::from(REPORT_HEADER);
    text.push('\n');
    for row in &table.rows {
        text.push_str(&format!(
            "{},{},{},{:.4},{:.4},{},{:.4}\n",
            row.strategy, row.sweep_var, row.sweep_value, row.mae, row.beta, row.trials, row.seconds
        ));
    }
    out.write_all(text.as_bytes())?;
    Ok(text.len())
}

/// Reads back a CSV written by [`emit_report`].
pub fn parse_report<R: BufRead>(reader: R) -> Result<ReportTable> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == REPORT_HEADER => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {REPORT_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: idx + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        rows.push(ReportRow {
            strategy: f[0].parse().map_err(|e: Error| bad(e.to_string()))?,
            sweep_var: f[1].parse().map_err(|e: Error| bad(e.to_string()))?,
            sweep_value: num(f[2])?,
            mae: num(f[3])?,
            beta: num(f[4])?,
            beta_analytic: None,
            trials: f[5].parse().map_err(|_| bad(format!("bad trial count {:?}", f[5])))?,
            seconds: num(f[6])?,
        });
    }
    Ok(ReportTable { rows })
}

/// Long-format plot data: one line per plotted point. MAE sweeps give
/// `y_var = mae`; `beta` sweeps give `beta_observed`, plus `beta_analytic`
/// for PPNS.
pub fn emit_plot_data<W: Write>(table: &ReportTable, mut out: W) -> Result<usize> {
    if table.is_empty() {
        return Err(Error::Empty("report table"));
    }
    let mut text = String::from(PLOT_HEADER);
    text.push('\n');
    for row in &table.rows {
        let figure = match row.sweep_var {
            SweepVar::P => "mae_vs_p",
            SweepVar::Beta => "beta_vs_p",
            SweepVar::K => "mae_vs_k",
            SweepVar::Rho => "mae_vs_rho",
        };
        let x_var = if row.sweep_var == SweepVar::Beta { "p" } else { row.sweep_var.as_str() };
        let mut point = |y_var: &str, y: f64| {
            text.push_str(&format!(
                "{figure},{},{x_var},{},{y_var},{y:.4}\n",
                row.strategy, row.sweep_value
            ));
        };
        if row.sweep_var == SweepVar::Beta {
            point("beta_observed", row.beta);
            if let Some(b) = row.beta_analytic {
                point("beta_analytic", b);
            }
        } else {
            point("mae", row.mae);
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(text.len())
}
