use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shaped_horizon::dqn::{dqn_train, DqnConfig};
use shaped_horizon::estimators::{sample_trajectories, StartStates};
use shaped_horizon::gridworld::{build_gridworld, GridSpec};
use shaped_horizon::harness::{
    aggregate_curves, read_raw_csv, run_experiment, write_aggregate_csv, ExperimentConfig, ResultGrid,
};
use shaped_horizon::io::{read_json, read_mdp, read_trajectories, write_atomic, write_json, write_mdp, write_trajectories};
use shaped_horizon::maxent::{maxent_irl, MaxEntConfig};
use shaped_horizon::mdp::{policy_evaluation, value_iteration, StochasticPolicy, DEFAULT_TOL};
use shaped_horizon::shaping::{action_gap, horizon_criterion, potential_from_values, shape_reward, Potential};

#[derive(Parser)]
#[command(name = "shaped-horizon", version, about = "Planning-aware reward shaping lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of DQN seeds (500 reproduces the full-scale run).
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Build a gridworld MDP file from a grid spec (defaults when omitted).
    Gridworld {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Value iteration on an MDP file.
    Solve {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out the optimal policy to produce demonstrations.
    Demos {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        start: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shape the reward of an MDP file with the planning-aware potential.
    Shape {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// MaxEnt IRL from demonstrations.
    IrlMaxent {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
    },
    /// Train DQN on one reward, evaluating under another.
    TrainDqn(TrainDqnArgs),
    /// Aggregate a raw results CSV into mean curves with bootstrap intervals.
    Aggregate {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainDqnArgs {
    /// MDP file whose rewards are used for training.
    #[arg(long)]
    reward: PathBuf,
    /// MDP file whose rewards score the greedy policy after each episode.
    #[arg(long)]
    eval_reward: PathBuf,
    #[arg(long)]
    start: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 100)]
    steps_per_episode: usize,
    #[arg(long, default_value_t = 1024)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 24)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 8)]
    target_update_period: usize,
    #[arg(long, default_value_t = 1.0)]
    target_update_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon_end: f64,
    #[arg(long, default_value_t = 10_000)]
    epsilon_decay_steps: usize,
    #[arg(long, default_value_t = 50_000)]
    buffer_capacity: usize,
    #[arg(long, default_value_t = 1024)]
    warmup: usize,
    #[arg(long, default_value_t = 1.0)]
    huber_delta: f64,
}

impl TrainDqnArgs {
    fn config(&self) -> DqnConfig {
        DqnConfig {
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            batch_size: self.batch_size,
            gamma: self.gamma,
            learning_rate: self.learning_rate,
            hidden_dim: self.hidden_dim,
            target_update_period: self.target_update_period,
            target_update_rate: self.target_update_rate,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_steps: self.epsilon_decay_steps,
            buffer_capacity: self.buffer_capacity,
            warmup: self.warmup,
            huber_delta: self.huber_delta,
            seed: self.seed,
        }
    }
}

#[derive(Serialize)]
struct SolveOutput {
    values: Vec<f64>,
    q: Vec<Vec<f64>>,
    policy: Vec<usize>,
}

#[derive(Serialize)]
struct ShapeReport {
    phi: Vec<f64>,
    delta: Vec<f64>,
    degenerate: Vec<bool>,
    criterion_before: f64,
    criterion_after: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Experiment {
            config,
            seeds,
            output_dir,
        } => {
            let mut cfg: ExperimentConfig =
                read_json(&config).with_context(|| format!("reading config {}", config.display()))?;
            if let Some(n) = seeds {
                cfg.n_seeds = n;
                cfg.seeds = None;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let out = run_experiment(&cfg)?;
            println!(
                "wrote {} rows to {} (criterion {:.6} -> {:.6})",
                out.rows.len(),
                cfg.output_dir.display(),
                out.prepared.report.criterion_zero_potential,
                out.prepared.report.criterion_shaped
            );
        }
        Command::Gridworld { config, out } => {
            let spec: GridSpec = match config {
                Some(path) => read_json(&path)?,
                None => GridSpec::default(),
            };
            let (mdp, reward) = build_gridworld(&spec)?;
            write_mdp(&out, &mdp, &reward)?;
        }
        Command::Solve { mdp, tol, out } => {
            let (mdp, reward) = read_mdp(&mdp)?;
            let sol = value_iteration(&mdp, &reward, tol)?;
            let output = SolveOutput {
                values: sol.values.0,
                q: sol.q.to_rows(),
                policy: sol.policy.action_of,
            };
            emit_json(out.as_deref(), &output)?;
        }
        Command::Demos {
            mdp,
            start,
            count,
            seed,
            out,
        } => {
            let (mdp, reward) = read_mdp(&mdp)?;
            let sol = value_iteration(&mdp, &reward, DEFAULT_TOL)?;
            let demos = sample_trajectories(&mdp, &reward, &sol.policy, StartStates::Fixed(start), count, seed)?;
            write_trajectories(&out, &demos)?;
        }
        Command::Shape { mdp, out, report } => {
            let (mdp, r0) = read_mdp(&mdp)?;
            let v_star = value_iteration(&mdp, &r0, DEFAULT_TOL)?.values;
            let uniform = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
            let (_, q_rand) = policy_evaluation(&mdp, &r0, &uniform, DEFAULT_TOL)?;
            let phi = potential_from_values(&q_rand, &v_star)?;
            let shaped = shape_reward(&mdp, &r0, &phi)?;
            let gaps = action_gap(&q_rand);
            let rep = ShapeReport {
                criterion_before: horizon_criterion(&q_rand, &v_star, &gaps, &Potential::zeros(mdp.n_states()))?,
                criterion_after: horizon_criterion(&q_rand, &v_star, &gaps, &phi)?,
                phi: phi.phi,
                delta: gaps.delta,
                degenerate: gaps.degenerate_mask,
            };
            write_mdp(&out, &mdp, &shaped)?;
            emit_json(report.as_deref(), &rep)?;
        }
        Command::IrlMaxent {
            mdp,
            demos,
            out,
            log,
            learning_rate,
            iterations,
            horizon,
        } => {
            let (mdp, _) = read_mdp(&mdp)?;
            let demos = read_trajectories(&demos)?;
            let cfg = MaxEntConfig {
                learning_rate,
                n_iterations: iterations,
                horizon,
                ..MaxEntConfig::default()
            };
            let result = maxent_irl(&mdp, &demos, &cfg)?;
            write_mdp(&out, &mdp, &result.reward)?;
            if let Some(log) = log {
                let mut csv = String::from("iteration,gradient_inf_norm\n");
                for (i, g) in &result.convergence {
                    csv.push_str(&format!("{i},{g}\n"));
                }
                write_atomic(&log, csv.as_bytes())?;
            }
            eprintln!(
                "{} after {} iterations",
                if result.converged { "converged" } else { "stopped" },
                result.convergence.len()
            );
        }
        Command::TrainDqn(args) => {
            let (mdp, reward) = read_mdp(&args.reward)?;
            let (eval_mdp, eval_reward) = read_mdp(&args.eval_reward)?;
            if eval_mdp != mdp {
                bail!("training and evaluation files describe different MDPs");
            }
            let returns = dqn_train(&mdp, &reward, &eval_reward, args.start, &args.config())?;
            let mut csv = String::from("episode,eval_return\n");
            for (e, r) in returns.iter().enumerate() {
                csv.push_str(&format!("{e},{r}\n"));
            }
            write_atomic(&args.out, csv.as_bytes())?;
        }
        Command::Aggregate {
            raw,
            out,
            resamples,
            level,
            seed,
        } => {
            let rows = read_raw_csv(&raw)?;
            let grid = ResultGrid::spanned_by(&rows);
            let agg = aggregate_curves(&rows, &grid, resamples, level, seed)?;
            write_aggregate_csv(&out, &agg)?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}
