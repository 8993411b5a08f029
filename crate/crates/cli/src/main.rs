use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ppns::attack::{run_attack, toy_matrix, AttackConfig, TOY_TARGET};
use ppns::eval::{emit_plot_data, emit_report, run_experiment, ExperimentConfig};
use ppns::prediction::predict_rating;
use ppns::privacy::target_sensitivity;
use ppns::similarity::{candidate_list, candidate_list_for};
use ppns::wallenius::{p_from_accuracy, p_lower_bound_security, p_upper_bound_security, predict_beta};
use ppns::{CandidateList, Execution, ItemId, Metric, RatingMatrix, StrategyConfig, StrategyKind, UserId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ppns", version, about = "Private neighbour selection for collaborative filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a u.data file and print its size
    Ingest {
        path: PathBuf,
        /// Write the parsed ratings back out in u.data form
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an MAE sweep described by a config file
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's dataset path
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Report CSV destination (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write long-format plot data here
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Simulate the kNN / beta-kNN attack
    Attack(AttackArgs),
    /// Admissible range of p and the partition-depth forecast
    Bounds(BoundsArgs),
    /// Predict one rating
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        user: u32,
        #[arg(long)]
        item: u32,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a user's candidate neighbour list
    Candidates {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        user: u32,
        #[arg(long, default_value = "cosine")]
        metric: Metric,
    },
}

#[derive(Args)]
struct StrategyArgs {
    #[arg(long, default_value = "ppns")]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Fixed sensitivity instead of the per-target estimate
    #[arg(long)]
    rs: Option<f64>,
    #[arg(long, default_value = "cosine")]
    metric: Metric,
}

impl StrategyArgs {
    fn config(&self) -> StrategyConfig {
        StrategyConfig {
            kind: self.strategy,
            k: self.k,
            p: self.p,
            epsilon: self.epsilon,
            rho: self.rho,
            rs_override: self.rs,
            pncf_noise: true,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    /// Rating file; a synthetic toy matrix is used if omitted
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target user (defaults to the toy target)
    #[arg(long)]
    target: Option<u32>,
    /// Honest users in the toy matrix
    #[arg(long, default_value_t = 1000)]
    honest: usize,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Ratings of the target known to the attacker
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Fakes injected, in multiples of k
    #[arg(long, default_value_t = 1)]
    beta: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Number of candidate neighbours
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    rs: f64,
    /// Similarity of the best candidate, used for its selection weight
    #[arg(long, default_value_t = 1.0)]
    sim1: f64,
    /// Required expected similarity sum; needs --similarities
    #[arg(long, requires = "similarities")]
    alpha0: Option<f64>,
    /// Candidate CSV as written by `candidates`
    #[arg(long)]
    similarities: Option<PathBuf>,
    /// Forecast beta at this p instead of the security lower bound
    #[arg(long)]
    p: Option<f64>,
}

fn load(path: &Path) -> Result<RatingMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RatingMatrix::parse(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn experiment(
    config: &Path,
    data: Option<PathBuf>,
    trials: Option<usize>,
    out: Option<PathBuf>,
    plot_data: Option<PathBuf>,
    sequential: bool,
) -> Result<()> {
    let file = File::open(config).with_context(|| format!("opening {}", config.display()))?;
    let mut cfg = ExperimentConfig::parse(BufReader::new(file)).context("reading experiment config")?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if sequential {
        cfg.execution = Execution::Sequential;
    }
    let dataset = data
        .or_else(|| cfg.dataset.clone())
        .context("no dataset: set `dataset` in the config or pass --data")?;
    let matrix = load(&dataset)?;
    let (table, failure) = match run_experiment(&cfg, &matrix) {
        Ok(run) => (run.table, None),
        Err(f) => {
            let f = *f;
            (f.completed, Some((f.strategy, f.sweep_value, f.error)))
        }
    };
    for row in &table.rows {
        if let Some(analytic) = row.beta_analytic {
            if (row.beta - analytic).abs() >= 1.0 {
                eprintln!(
                    "note: {} at {} = {}: observed beta {:.2} vs analytic {:.2}",
                    row.strategy, row.sweep_var, row.sweep_value, row.beta, analytic
                );
            }
        }
    }
    if !table.is_empty() {
        let mut w = sink(out.as_deref())?;
        emit_report(&table, &mut w)?;
        w.flush()?;
        if let Some(path) = plot_data {
            let mut w = sink(Some(&path))?;
            emit_plot_data(&table, &mut w)?;
            w.flush()?;
        }
    }
    if let Some((strategy, value, error)) = failure {
        bail!("{strategy} at grid value {value}: {error}");
    }
    Ok(())
}

fn attack(args: AttackArgs) -> Result<()> {
    let (matrix, target) = match &args.data {
        Some(path) => {
            let target = args.target.context("--target is required with --data")?;
            (load(path)?, UserId(target))
        }
        None => (toy_matrix(args.honest), args.target.map_or(TOY_TARGET, UserId)),
    };
    let strategy = args.strategy.config();
    let config = AttackConfig {
        known_items: args.m,
        budget_multiplier: args.beta,
        metric: args.strategy.metric,
        trials: args.trials,
        seed: args.seed,
        execution: execution(args.sequential),
        ..AttackConfig::new(target, strategy)
    };
    let report = run_attack(&matrix, &config)?;
    println!("strategy,k,p,epsilon,m,beta,trials,exposure_rate,full_reconstruction_rate");
    println!(
        "{},{},{},{},{},{},{},{:.4},{:.4}",
        strategy.kind,
        strategy.k,
        strategy.p,
        strategy.epsilon,
        args.m,
        args.beta,
        report.trials,
        report.exposure_rate,
        report.full_reconstruction_rate
    );
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let omega_1 = (args.epsilon * args.sim1 / (4.0 * args.k as f64 * args.rs)).exp();
    let lower = p_lower_bound_security(args.n, args.k, omega_1)?;
    let upper = p_upper_bound_security(args.k)?;
    let accuracy = match (args.alpha0, &args.similarities) {
        (Some(alpha0), Some(path)) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let list = CandidateList::read_csv(BufReader::new(file), UserId(0), Metric::default())?;
            Some(p_from_accuracy(alpha0, &list, args.k)?)
        }
        _ => None,
    };
    let p = args.p.unwrap_or(lower.max(accuracy.unwrap_or(0.0)));
    let forecast = predict_beta(p, args.k)?;
    println!("omega_1,p_lower_security,p_lower_accuracy,p_upper_security,p,j,beta");
    println!(
        "{omega_1:.6},{lower:.4},{},{upper:.4},{p:.4},{},{:.4}",
        accuracy.map_or(String::new(), |a| format!("{a:.4}")),
        forecast.j,
        forecast.beta_analytic
    );
    Ok(())
}

fn predict(data: &Path, user: u32, item: u32, args: &StrategyArgs, seed: u64) -> Result<()> {
    let matrix = load(data)?;
    let (user, item) = (UserId(user), ItemId(item));
    let profile = matrix.profile(user).with_context(|| format!("unknown user {user}"))?;
    let candidates = candidate_list_for(&matrix, user, profile, args.metric)?;
    let rs = target_sensitivity(&matrix, user, profile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = args.config().select(&candidates, rs, &mut rng)?;
    let prediction = predict_rating(&matrix, &set, item)?;
    println!("user,item,strategy,prediction,neighbours_used,beta_observed");
    println!(
        "{user},{item},{},{:.4},{},{}",
        args.strategy,
        prediction.value,
        prediction.neighbours_used,
        set.beta_observed()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest { path, out } => {
            let matrix = load(&path)?;
            println!("ratings,users,items");
            println!("{},{},{}", matrix.len(), matrix.num_users(), matrix.num_items());
            if let Some(out) = out {
                let mut w = sink(Some(&out))?;
                matrix.write(&mut w)?;
                w.flush()?;
            }
        }
        Command::Experiment {
            config,
            data,
            trials,
            out,
            plot_data,
            sequential,
        } => experiment(&config, data, trials, out, plot_data, sequential)?,
        Command::Attack(args) => attack(args)?,
        Command::Bounds(args) => bounds(args)?,
        Command::Predict {
            data,
            user,
            item,
            strategy,
            seed,
        } => predict(&data, user, item, &strategy, seed)?,
        Command::Candidates { data, user, metric } => {
            let matrix = load(&data)?;
            let list = candidate_list(&matrix, UserId(user), metric)?;
            let mut w = sink(None)?;
            list.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}
