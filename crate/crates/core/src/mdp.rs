//! Finite MDPs, exact solvers and trajectory rollouts.
//!
//! Terminal states absorb: their value is pinned to zero and whatever the
//! reward table holds in their rows is never collected. Episodes are further
//! truncated at [`TabularMdp::horizon_limit`] steps.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::StateActionTable;

/// Tolerance on transition-row normalisation.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default stopping tolerance for the iterative solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// Flattened `[s][a][s']`.
    transitions: Vec<f64>,
    terminal: Vec<bool>,
    horizon_limit: usize,
    /// Nonzero entries of each `[s][a]` row, in ascending `s'` order.
    successors: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        transitions: Vec<f64>,
        terminal: Vec<bool>,
        horizon_limit: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config(format!(
                "MDP needs at least one state and one action, got {n_states}x{n_actions}"
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if horizon_limit == 0 {
            return Err(Error::Config("horizon_limit must be at least 1".into()));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::Config(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if terminal.len() != n_states {
            return Err(Error::Config(format!(
                "terminal mask has {} entries, expected {n_states}",
                terminal.len()
            )));
        }

        let mut successors = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transitions[(s * n_actions + a) * n_states..][..n_states];
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::Config(format!(
                        "transition P(.|{s},{a}) has invalid probability {p}"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Config(format!(
                        "transition P(.|{s},{a}) sums to {sum}"
                    )));
                }
                if terminal[s] && row[s] != 1.0 {
                    return Err(Error::Config(format!(
                        "terminal state {s} must self-loop with probability 1 under action {a}"
                    )));
                }
                successors.push(
                    row.iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(next, p)| (next, *p))
                        .collect(),
                );
            }
        }

        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transitions,
            terminal,
            horizon_limit,
            successors,
        })
    }

    /// Build from nested `[s][a][s']` arrays.
    pub fn from_nested(
        gamma: f64,
        transitions: Vec<Vec<Vec<f64>>>,
        terminal: Vec<bool>,
        horizon_limit: usize,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in transitions.into_iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::Config(format!("state {s} has a ragged action list")));
            }
            for row in per_action {
                if row.len() != n_states {
                    return Err(Error::Config(format!(
                        "state {s} has a transition row of length {}",
                        row.len()
                    )));
                }
                flat.extend(row);
            }
        }
        Self::new(n_states, n_actions, gamma, flat, terminal, horizon_limit)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon_limit(&self) -> usize {
        self.horizon_limit
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.n_actions + a]
    }

    /// `Σ_{s'} P(s'|s,a) f(s')`.
    #[inline]
    pub fn expectation(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        self.successors(s, a).iter().map(|&(next, p)| p * f[next]).sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.successors.iter().all(|row| row.len() == 1)
    }

    /// Same dynamics with a different episode cap.
    pub fn with_horizon_limit(&self, horizon_limit: usize) -> Result<Self> {
        if horizon_limit == 0 {
            return Err(Error::Config("horizon_limit must be at least 1".into()));
        }
        Ok(Self {
            horizon_limit,
            ..self.clone()
        })
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_from(self.successors(s, a), rng)
    }

    pub fn check_reward(&self, reward: &RewardTable) -> Result<()> {
        if reward.n_states() != self.n_states || reward.n_actions() != self.n_actions {
            return Err(Error::Config(format!(
                "reward table is {}x{}, MDP is {}x{}",
                reward.n_states(),
                reward.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        if !reward.is_finite() {
            return Err(Error::Input("reward table contains non-finite entries".into()));
        }
        Ok(())
    }
}

fn sample_from<R: Rng + ?Sized>(outcomes: &[(usize, f64)], rng: &mut R) -> usize {
    if let [(only, _)] = outcomes {
        return *only;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(i, p) in outcomes {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the accumulated mass.
    outcomes.last().map(|&(i, _)| i).expect("empty distribution")
}

macro_rules! table_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub StateActionTable);

        impl Deref for $name {
            type Target = StateActionTable;

            fn deref(&self) -> &StateActionTable {
                &self.0
            }
        }

        impl From<StateActionTable> for $name {
            fn from(t: StateActionTable) -> Self {
                Self(t)
            }
        }
    };
}

table_newtype!(
    /// Reward per `(state, action)`.
    RewardTable
);
table_newtype!(
    /// Expected discounted return per `(state, action)`.
    QFunction
);

impl RewardTable {
    pub fn into_inner(self) -> StateActionTable {
        self.0
    }
}

impl QFunction {
    pub fn into_inner(self) -> StateActionTable {
        self.0
    }
}

/// Expected discounted return per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl Deref for ValueFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl ValueFunction {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub trait Policy {
    fn act<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub action_of: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(action_of: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some((s, a)) = action_of.iter().enumerate().find(|(_, a)| **a >= n_actions) {
            return Err(Error::Config(format!(
                "policy picks action {a} at state {s} but only {n_actions} actions exist"
            )));
        }
        Ok(Self { action_of })
    }

    pub fn to_stochastic(&self, n_actions: usize) -> StochasticPolicy {
        let probs = StateActionTable::from_fn(self.action_of.len(), n_actions, |s, a| {
            if self.action_of[s] == a {
                1.0
            } else {
                0.0
            }
        });
        StochasticPolicy { probs }
    }
}

impl Policy for DeterministicPolicy {
    fn act<R: Rng + ?Sized>(&self, s: usize, _rng: &mut R) -> usize {
        self.action_of[s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    probs: StateActionTable,
}

impl StochasticPolicy {
    pub fn new(probs: StateActionTable) -> Result<Self> {
        for (s, row) in probs.rows().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Config(format!("policy row {s} has an invalid probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Config(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: StateActionTable::filled(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub fn probs(&self) -> &StateActionTable {
        &self.probs
    }
}

impl Policy for StochasticPolicy {
    fn act<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let row = self.probs.row(s);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_state: usize,
    pub steps: Vec<Step>,
    /// The episode ended by entering (or starting in) a terminal state
    /// rather than by hitting the horizon limit.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Start state followed by every successor state.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.start_state).chain(self.steps.iter().map(|s| s.next_state))
    }

    /// Final state reached (the start state for an empty trajectory).
    pub fn last_state(&self) -> usize {
        self.steps.last().map_or(self.start_state, |s| s.next_state)
    }
}

#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub values: ValueFunction,
    pub q: QFunction,
    pub policy: DeterministicPolicy,
}

/// Sup-norm change at which an iterative solve is within `tol` of its fixed
/// point: a γ-contraction with step size δ is at most γδ/(1−γ) away.
fn stopping_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / gamma
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("tolerance must be positive, got {tol}")))
    }
}

fn backup(mdp: &TabularMdp, reward: &RewardTable, v: &[f64]) -> QFunction {
    let gamma = mdp.gamma();
    QFunction(StateActionTable::from_fn(
        mdp.n_states(),
        mdp.n_actions(),
        |s, a| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                reward.get(s, a) + gamma * mdp.expectation(s, a, v)
            }
        },
    ))
}

/// Synchronous value iteration. The returned values are within `tol` of the
/// optimal fixed point in sup norm, so the Bellman residual is at most `tol`.
pub fn value_iteration(mdp: &TabularMdp, reward: &RewardTable, tol: f64) -> Result<OptimalSolution> {
    check_tol(tol)?;
    mdp.check_reward(reward)?;
    let threshold = stopping_threshold(mdp.gamma(), tol);
    let mut v = vec![0.0; mdp.n_states()];
    let mut next = vec![0.0; mdp.n_states()];
    let mut change = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        change = 0.0;
        for s in 0..mdp.n_states() {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..mdp.n_actions())
                    .map(|a| reward.get(s, a) + mdp.gamma() * mdp.expectation(s, a, &v))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            change = f64::max(change, (next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if change <= threshold {
            let q = backup(mdp, reward, &v);
            let policy = greedy_policy(&q);
            return Ok(OptimalSolution {
                values: ValueFunction(v),
                q,
                policy,
            });
        }
    }
    Err(Error::NotConverged {
        sweeps: MAX_SWEEPS,
        last_change: change,
    })
}

/// Iterative evaluation of a stochastic policy; same accuracy contract as
/// [`value_iteration`].
pub fn policy_evaluation(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<(ValueFunction, QFunction)> {
    check_tol(tol)?;
    mdp.check_reward(reward)?;
    let probs = policy.probs();
    if probs.n_states() != mdp.n_states() || probs.n_actions() != mdp.n_actions() {
        return Err(Error::Config("policy shape does not match the MDP".into()));
    }
    let threshold = stopping_threshold(mdp.gamma(), tol);
    let mut v = vec![0.0; mdp.n_states()];
    let mut next = vec![0.0; mdp.n_states()];
    let mut change = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        change = 0.0;
        for s in 0..mdp.n_states() {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                probs
                    .row(s)
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(a, p)| p * (reward.get(s, a) + mdp.gamma() * mdp.expectation(s, a, &v)))
                    .sum()
            };
            change = f64::max(change, (next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if change <= threshold {
            let q = backup(mdp, reward, &v);
            return Ok((ValueFunction(v), q));
        }
    }
    Err(Error::NotConverged {
        sweeps: MAX_SWEEPS,
        last_change: change,
    })
}

/// `max_s |V(s) − max_a [R(s,a) + γ E V(s')]|` over non-terminal states.
pub fn bellman_residual(mdp: &TabularMdp, reward: &RewardTable, v: &ValueFunction) -> f64 {
    let q = backup(mdp, reward, v);
    (0..mdp.n_states())
        .filter(|&s| !mdp.is_terminal(s))
        .map(|s| (v[s] - q.row_max(s)).abs())
        .fold(0.0, f64::max)
}

/// Greedy action per state, ties going to the lowest action index.
pub fn greedy_policy(q: &QFunction) -> DeterministicPolicy {
    DeterministicPolicy {
        action_of: q.rows().map(argmax).collect(),
    }
}

/// Index of the first maximal entry.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn rollout<P: Policy>(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &P,
    start: usize,
    rng_seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rollout_with(mdp, reward, policy, start, &mut rng)
}

/// Like [`rollout`] but drawing from a caller-owned generator, for batches.
pub fn rollout_with<P: Policy, R: Rng + ?Sized>(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &P,
    start: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if start >= mdp.n_states() {
        return Err(Error::Config(format!(
            "start state {start} out of range for {} states",
            mdp.n_states()
        )));
    }
    mdp.check_reward(reward)?;
    let mut steps = Vec::new();
    let mut state = start;
    let mut terminated = mdp.is_terminal(state);
    while !terminated && steps.len() < mdp.horizon_limit() {
        let action = policy.act(state, rng);
        let next_state = mdp.sample_next(state, action, rng);
        steps.push(Step {
            state,
            action,
            reward: reward.get(state, action),
            next_state,
        });
        state = next_state;
        terminated = mdp.is_terminal(state);
    }
    Ok(Trajectory {
        start_state: start,
        steps,
        terminated,
    })
}

/// Discounted return of a trajectory.
pub fn discounted_return(trajectory: &Trajectory, gamma: f64) -> f64 {
    trajectory
        .steps
        .iter()
        .rev()
        .fold(0.0, |g, step| step.reward + gamma * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_state(rewards: Vec<f64>, gamma: f64) -> (TabularMdp, RewardTable) {
        let n_actions = rewards.len();
        let mdp = TabularMdp::new(1, n_actions, gamma, vec![1.0; n_actions], vec![false], 10).unwrap();
        let reward = RewardTable(StateActionTable::from_flat(1, n_actions, rewards).unwrap());
        (mdp, reward)
    }

    fn chain() -> (TabularMdp, RewardTable) {
        let mdp = TabularMdp::from_nested(
            0.9,
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            vec![false, true],
            100,
        )
        .unwrap();
        let reward = RewardTable(StateActionTable::from_rows(vec![vec![1.0], vec![0.0]]).unwrap());
        (mdp, reward)
    }

    #[test]
    fn geometric_self_loop() {
        let (mdp, reward) = single_state(vec![1.0], 0.5);
        let sol = value_iteration(&mdp, &reward, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(sol.values[0], 2.0, epsilon = DEFAULT_TOL);
    }

    #[test]
    fn one_step_chain() {
        let (mdp, reward) = chain();
        let sol = value_iteration(&mdp, &reward, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(sol.values[0], 1.0, epsilon = DEFAULT_TOL);
        assert_eq!(sol.values[1], 0.0);
    }

    #[test]
    fn uniform_policy_immediate_reward() {
        let (mdp, reward) = single_state(vec![0.0, 1.0], 0.0);
        let (v, q) =
            policy_evaluation(&mdp, &reward, &StochasticPolicy::uniform(1, 2), DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(v[0], 0.5);
        assert_eq!(q.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn greedy_tie_break() {
        let q = QFunction(StateActionTable::from_rows(vec![vec![1.0, 3.0, 2.0], vec![2.0, 2.0, 0.0]]).unwrap());
        assert_eq!(greedy_policy(&q).action_of, vec![1, 0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularMdp::new(1, 1, 0.5, vec![0.9], vec![false], 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = TabularMdp::new(2, 1, 0.5, vec![0.0, 1.0, 1.0, 0.0], vec![false, true], 1).unwrap_err();
        assert!(err.to_string().contains("self-loop"));
        assert!(TabularMdp::new(1, 1, 1.0, vec![1.0], vec![false], 1).is_err());
        assert!(TabularMdp::new(1, 1, 0.5, vec![1.0], vec![false], 0).is_err());
    }

    #[test]
    fn solver_errors() {
        let (mdp, _) = chain();
        let wrong = RewardTable(StateActionTable::zeros(3, 1));
        assert!(matches!(value_iteration(&mdp, &wrong, 1e-10), Err(Error::Config(_))));
        let nan = RewardTable(StateActionTable::from_rows(vec![vec![f64::NAN], vec![0.0]]).unwrap());
        assert!(matches!(value_iteration(&mdp, &nan, 1e-10), Err(Error::Input(_))));
        let ok = RewardTable(StateActionTable::zeros(2, 1));
        assert!(value_iteration(&mdp, &ok, 0.0).is_err());
    }

    #[test]
    fn terminal_start_is_empty() {
        let (mdp, reward) = chain();
        let t = rollout(&mdp, &reward, &StochasticPolicy::uniform(2, 1), 1, 3).unwrap();
        assert!(t.is_empty());
        assert!(t.terminated);
    }

    #[test]
    fn truncates_at_horizon() {
        let (mdp, reward) = single_state(vec![1.0, 0.0], 0.9);
        let t = rollout(&mdp, &reward, &StochasticPolicy::uniform(1, 2), 0, 11).unwrap();
        assert_eq!(t.len(), 10);
        assert!(!t.terminated);
    }

    #[test]
    fn out_of_range_start() {
        let (mdp, reward) = chain();
        assert!(rollout(&mdp, &reward, &StochasticPolicy::uniform(2, 1), 2, 0).is_err());
    }
}
