use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::results::{
    aggregate_curves, sort_rows, write_aggregate_csv, write_raw_csv, AggregateRow, ResultGrid, ResultRow, Variant,
};
use crate::dqn::{dqn_train, DqnConfig};
use crate::error::{Error, Result};
use crate::estimators::{mc_q_values, mc_state_values, sample_trajectories, StartStates};
use crate::gridworld::{build_gridworld, GridSpec};
use crate::io::write_json;
use crate::maxent::{maxent_irl, MaxEntConfig};
use crate::mdp::{
    policy_evaluation, value_iteration, QFunction, RewardTable, StochasticPolicy, TabularMdp, ValueFunction,
};
use crate::seeds::derive_seed;
use crate::shaping::{
    action_gap, horizon_criterion, optimal_action_sets, potential_from_values, shape_reward,
    verify_policy_invariance, GapVector, Potential,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub expert_episodes: usize,
    pub random_episodes: usize,
    pub starts: StartStates,
    /// Value used for entries no trajectory visited.
    pub fallback: f64,
    /// Step cap for estimation rollouts. Kept well above the environment's
    /// own horizon: truncated random walks bias Q^rand downwards.
    pub horizon_limit: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            expert_episodes: 10_000,
            random_episodes: 50_000,
            starts: StartStates::UniformNonTerminal,
            fallback: 0.0,
            horizon_limit: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub master_seed: u64,
    pub n_seeds: usize,
    /// Explicit seed labels; defaults to `0..n_seeds`.
    pub seeds: Option<Vec<u64>>,
    pub variants: Vec<Variant>,
    /// Exact solvers for V* and Q^rand instead of Monte Carlo.
    pub oracle: bool,
    pub monte_carlo: MonteCarloConfig,
    pub maxent: MaxEntConfig,
    pub n_demos: usize,
    /// Episodes, steps per episode and every other DQN knob. Its `seed` is
    /// replaced per job by the derived child seed.
    pub dqn: DqnConfig,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    /// Tie threshold for comparing optimal action sets.
    pub policy_tol: f64,
    pub output_dir: PathBuf,
    /// Worker threads for the DQN job grid; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            master_seed: 0,
            n_seeds: 20,
            seeds: None,
            variants: Variant::ALL.to_vec(),
            oracle: true,
            monte_carlo: MonteCarloConfig::default(),
            maxent: MaxEntConfig::default(),
            n_demos: 100,
            dqn: DqnConfig::default(),
            bootstrap_resamples: 10_000,
            ci_level: 0.95,
            policy_tol: 1e-10,
            output_dir: PathBuf::from("results"),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.n_seeds as u64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.dqn.validate()?;
        self.maxent.validate()?;
        let seeds = self.seed_list();
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != seeds.len() {
            return Err(Error::Config("seed list contains duplicates".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no reward variants selected".into()));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::Config("bootstrap_resamples must be positive".into()));
        }
        if self.variants.contains(&Variant::RMaxEnt) && self.n_demos == 0 {
            return Err(Error::Config("MaxEnt IRL needs at least one demonstration".into()));
        }
        if !self.oracle && (self.monte_carlo.expert_episodes == 0 || self.monte_carlo.random_episodes == 0) {
            return Err(Error::Config("Monte Carlo mode needs expert and random episodes".into()));
        }
        Ok(())
    }

    /// DQN seed of one job: `derive_seed(master, variant label, seed)`.
    pub fn job_seed(&self, variant: Variant, seed: u64) -> u64 {
        derive_seed(self.master_seed, variant.label(), seed)
    }
}

/// Everything computed before DQN training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mdp: TabularMdp,
    pub r0: RewardTable,
    pub start: usize,
    pub v_star: ValueFunction,
    pub q_rand: QFunction,
    pub potential: Potential,
    pub gaps: GapVector,
    pub r_phi: RewardTable,
    pub r_maxent: Option<RewardTable>,
    pub report: PipelineReport,
}

impl Prepared {
    pub fn reward(&self, variant: Variant) -> &RewardTable {
        match variant {
            Variant::R0 => &self.r0,
            Variant::RPhi => &self.r_phi,
            Variant::RMaxEnt => self.r_maxent.as_ref().expect("MaxEnt reward prepared when requested"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Demo-visited non-terminal states where the greedy policy under the
    /// learned reward takes an optimal action.
    pub demo_states_matching: usize,
    pub demo_states: usize,
    /// Same count over every non-terminal state.
    pub all_states_matching: usize,
    pub non_terminal_states: usize,
    pub greedy_return_under_r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub oracle: bool,
    pub optimal_return: f64,
    pub phi: Vec<f64>,
    pub delta: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub criterion_zero_potential: f64,
    pub criterion_shaped: f64,
    pub policy_invariant: bool,
    pub maxent: Option<MaxEntReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub prepared: Prepared,
    pub rows: Vec<ResultRow>,
    pub aggregate: Vec<AggregateRow>,
}

fn staged<T>(stage: &'static str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(stage, seed))
}

/// Environment, exact solve, value estimates, shaping, gates and MaxEnt IRL.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let seed = cfg.master_seed;
    let (mdp, r0) = staged("environment", seed, build_gridworld(&cfg.grid))?;
    let start = cfg.grid.start_state();
    let exact = staged("solve", seed, value_iteration(&mdp, &r0, crate::mdp::DEFAULT_TOL))?;
    let uniform = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());

    let (v_star, q_rand) = if cfg.oracle {
        let (_, q_rand) = staged(
            "estimate",
            seed,
            policy_evaluation(&mdp, &r0, &uniform, crate::mdp::DEFAULT_TOL),
        )?;
        (exact.values.clone(), q_rand)
    } else {
        let mc = &cfg.monte_carlo;
        let estimates = (|| {
            let long = mdp.with_horizon_limit(mc.horizon_limit)?;
            let expert = sample_trajectories(
                &long,
                &r0,
                &exact.policy,
                mc.starts,
                mc.expert_episodes,
                derive_seed(seed, "mc-expert", 0),
            )?;
            let v = mc_state_values(&expert, mdp.gamma(), mdp.n_states())?.into_value_function(mc.fallback);
            let random = sample_trajectories(
                &long,
                &r0,
                &uniform,
                mc.starts,
                mc.random_episodes,
                derive_seed(seed, "mc-random", 0),
            )?;
            let q = mc_q_values(&random, mdp.gamma(), mdp.n_states(), mdp.n_actions())?.into_q_function(mc.fallback);
            Ok((v, q))
        })();
        staged("estimate", seed, estimates)?
    };

    let potential = staged("shape", seed, potential_from_values(&q_rand, &v_star))?;
    let r_phi = staged("shape", seed, shape_reward(&mdp, &r0, &potential))?;
    let gaps = action_gap(&q_rand);
    let criterion_shaped = staged("shape", seed, horizon_criterion(&q_rand, &v_star, &gaps, &potential))?;
    let criterion_zero = staged(
        "shape",
        seed,
        horizon_criterion(&q_rand, &v_star, &gaps, &Potential::zeros(mdp.n_states())),
    )?;

    let policy_invariant = staged("shape", seed, verify_policy_invariance(&mdp, &r0, &r_phi, cfg.policy_tol))?;
    if !policy_invariant {
        return Err(Error::Input("shaped reward changed the optimal action sets".into()).at_stage("policy gate", seed));
    }
    if criterion_shaped > criterion_zero {
        return Err(Error::Input(format!(
            "shaped criterion {criterion_shaped} exceeds unshaped {criterion_zero}"
        ))
        .at_stage("criterion gate", seed));
    }

    let (r_maxent, maxent_report) = if cfg.variants.contains(&Variant::RMaxEnt) {
        let (reward, report) = staged("maxent", seed, run_maxent(cfg, &mdp, &r0, &exact.policy, start))?;
        (Some(reward), Some(report))
    } else {
        (None, None)
    };

    let report = PipelineReport {
        oracle: cfg.oracle,
        optimal_return: exact.values[start],
        phi: potential.phi.clone(),
        delta: gaps.delta.clone(),
        degenerate: gaps.degenerate_mask.clone(),
        criterion_zero_potential: criterion_zero,
        criterion_shaped,
        policy_invariant,
        maxent: maxent_report,
    };
    Ok(Prepared {
        mdp,
        r0,
        start,
        v_star,
        q_rand,
        potential,
        gaps,
        r_phi,
        r_maxent,
        report,
    })
}

fn run_maxent(
    cfg: &ExperimentConfig,
    mdp: &TabularMdp,
    r0: &RewardTable,
    expert: &crate::mdp::DeterministicPolicy,
    start: usize,
) -> Result<(RewardTable, MaxEntReport)> {
    let demos = sample_trajectories(
        mdp,
        r0,
        expert,
        StartStates::Fixed(start),
        cfg.n_demos,
        derive_seed(cfg.master_seed, "demos", 0),
    )?;
    let learned = maxent_irl(mdp, &demos, &cfg.maxent)?;
    let optimal = optimal_action_sets(mdp, r0, cfg.policy_tol)?;
    let greedy = value_iteration(mdp, &learned.reward, crate::mdp::DEFAULT_TOL)?.policy;
    let mut visited = vec![false; mdp.n_states()];
    for d in &demos {
        for s in d.states() {
            visited[s] = true;
        }
    }
    let matches = |s: usize| optimal[s].contains(&greedy.action_of[s]);
    let non_terminal: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).collect();
    let demo_states: Vec<usize> = non_terminal.iter().copied().filter(|&s| visited[s]).collect();
    let trajectory = crate::mdp::rollout(mdp, r0, &greedy, start, 0)?;
    let report = MaxEntReport {
        converged: learned.converged,
        iterations: learned.convergence.len(),
        final_gradient_norm: learned.convergence.last().map_or(f64::NAN, |c| c.1),
        demo_states_matching: demo_states.iter().filter(|&&s| matches(s)).count(),
        demo_states: demo_states.len(),
        all_states_matching: non_terminal.iter().filter(|&&s| matches(s)).count(),
        non_terminal_states: non_terminal.len(),
        greedy_return_under_r0: crate::mdp::discounted_return(&trajectory, mdp.gamma()),
    };
    Ok((learned.reward, report))
}

/// Train every (variant, seed) job and return the canonically sorted rows.
pub fn train_all(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<ResultRow>> {
    let jobs: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seed_list().into_iter().map(move |s| (v, s)))
        .collect();
    let run_job = |&(variant, seed): &(Variant, u64)| -> Result<Vec<ResultRow>> {
        let dqn_cfg = DqnConfig {
            seed: cfg.job_seed(variant, seed),
            ..cfg.dqn.clone()
        };
        let returns = dqn_train(&prepared.mdp, prepared.reward(variant), &prepared.r0, prepared.start, &dqn_cfg)
            .map_err(|e| e.at_stage("dqn", seed))?;
        Ok(returns
            .into_iter()
            .enumerate()
            .map(|(episode, eval_return)| ResultRow {
                variant,
                seed,
                episode,
                eval_return,
            })
            .collect())
    };
    let results: Vec<Result<Vec<ResultRow>>> = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.par_iter().map(run_job).collect(),
    };
    let mut rows = Vec::with_capacity(jobs.len() * cfg.dqn.episodes);
    for r in results {
        rows.extend(r?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn result_grid(cfg: &ExperimentConfig) -> ResultGrid {
    let mut variants = cfg.variants.clone();
    variants.sort();
    variants.dedup();
    let mut seeds = cfg.seed_list();
    seeds.sort_unstable();
    ResultGrid {
        variants,
        seeds,
        episodes: cfg.dqn.episodes,
    }
}

pub const RAW_FILE: &str = "raw.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const REPORT_FILE: &str = "report.json";

/// Full pipeline: prepare, train, aggregate, and persist `raw.csv`,
/// `aggregate.csv` and `report.json` under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let output = run_in_memory(cfg)?;
    persist(&cfg.output_dir, &output)?;
    Ok(output)
}

/// [`run_experiment`] without touching the filesystem.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let prepared = prepare(cfg)?;
    let rows = train_all(cfg, &prepared)?;
    let aggregate = aggregate_curves(
        &rows,
        &result_grid(cfg),
        cfg.bootstrap_resamples,
        cfg.ci_level,
        cfg.master_seed,
    )
    .map_err(|e| e.at_stage("aggregate", cfg.master_seed))?;
    Ok(ExperimentOutput {
        prepared,
        rows,
        aggregate,
    })
}

pub fn persist(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    write_raw_csv(&dir.join(RAW_FILE), &output.rows)?;
    write_aggregate_csv(&dir.join(AGGREGATE_FILE), &output.aggregate)?;
    write_json(&dir.join(REPORT_FILE), &output.prepared.report)
}
