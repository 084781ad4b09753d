//! Every-visit Monte Carlo estimates of state and state-action values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{rollout_with, Policy, QFunction, RewardTable, TabularMdp, Trajectory, ValueFunction};
use crate::sum::ExactSum;
use crate::table::StateActionTable;

/// Per-entry Monte Carlo means. Entries never visited hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    n_states: usize,
    /// 1 for state values.
    n_actions: usize,
    pub value: Vec<f64>,
    pub visit_count: Vec<u64>,
    pub coverage_mask: Vec<bool>,
}

impl McEstimate {
    fn from_sums(n_states: usize, n_actions: usize, sums: Vec<ExactSum>, counts: Vec<u64>) -> Self {
        let value = sums
            .iter()
            .zip(&counts)
            .map(|(sum, &n)| if n == 0 { f64::NAN } else { sum.value() / n as f64 })
            .collect();
        let coverage_mask = counts.iter().map(|&n| n > 0).collect();
        Self {
            n_states,
            n_actions,
            value,
            visit_count: counts,
            coverage_mask,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_covered(&self) -> usize {
        self.coverage_mask.iter().filter(|c| **c).count()
    }

    pub fn n_uncovered(&self) -> usize {
        self.coverage_mask.len() - self.n_covered()
    }

    pub fn into_value_function(self, fallback: f64) -> ValueFunction {
        ValueFunction(fill_uncovered(&self, fallback))
    }

    pub fn into_q_function(self, fallback: f64) -> QFunction {
        let (n_states, n_actions) = (self.n_states, self.n_actions);
        let dense = fill_uncovered(&self, fallback);
        QFunction(StateActionTable::from_flat(n_states, n_actions, dense).expect("shape preserved"))
    }

    /// Largest |estimate − exact| over covered entries.
    pub fn max_covered_error(&self, exact: &[f64]) -> f64 {
        assert_eq!(exact.len(), self.value.len());
        self.value
            .iter()
            .zip(exact)
            .zip(&self.coverage_mask)
            .filter(|(_, covered)| **covered)
            .fold(0.0, |m, ((est, truth), _)| m.max((est - truth).abs()))
    }
}

fn check_inputs(trajectories: &[Trajectory], gamma: f64) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::Input("no trajectories to estimate from".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

/// Discounted return following each step, computed back to front.
fn returns_to_go(trajectory: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; trajectory.len()];
    let mut g = 0.0;
    for (t, step) in trajectory.steps.iter().enumerate().rev() {
        g = step.reward + gamma * g;
        out[t] = g;
    }
    out
}

fn out_of_range(what: &str, index: usize, limit: usize) -> Error {
    Error::Input(format!("{what} {index} out of range (< {limit})"))
}

/// Every-visit Monte Carlo estimate of the state values of whatever policy
/// generated `trajectories`. A trajectory that ends in a terminal state
/// contributes one zero-return visit to that state.
pub fn mc_state_values(trajectories: &[Trajectory], gamma: f64, n_states: usize) -> Result<McEstimate> {
    check_inputs(trajectories, gamma)?;
    let mut sums = vec![ExactSum::new(); n_states];
    let mut counts = vec![0u64; n_states];
    for trajectory in trajectories {
        for (step, g) in trajectory.steps.iter().zip(returns_to_go(trajectory, gamma)) {
            let s = step.state;
            if s >= n_states {
                return Err(out_of_range("state", s, n_states));
            }
            sums[s].add(g);
            counts[s] += 1;
        }
        if trajectory.terminated {
            let s = trajectory.last_state();
            if s >= n_states {
                return Err(out_of_range("state", s, n_states));
            }
            sums[s].add(0.0);
            counts[s] += 1;
        }
    }
    Ok(McEstimate::from_sums(n_states, 1, sums, counts))
}

/// Every-visit Monte Carlo estimate over `(state, action)` pairs.
pub fn mc_q_values(
    trajectories: &[Trajectory],
    gamma: f64,
    n_states: usize,
    n_actions: usize,
) -> Result<McEstimate> {
    check_inputs(trajectories, gamma)?;
    let mut sums = vec![ExactSum::new(); n_states * n_actions];
    let mut counts = vec![0u64; n_states * n_actions];
    for trajectory in trajectories {
        for (step, g) in trajectory.steps.iter().zip(returns_to_go(trajectory, gamma)) {
            if step.state >= n_states {
                return Err(out_of_range("state", step.state, n_states));
            }
            if step.action >= n_actions {
                return Err(out_of_range("action", step.action, n_actions));
            }
            let i = step.state * n_actions + step.action;
            sums[i].add(g);
            counts[i] += 1;
        }
    }
    Ok(McEstimate::from_sums(n_states, n_actions, sums, counts))
}

/// Dense copy of the estimate with uncovered entries set to `fallback`.
pub fn fill_uncovered(estimate: &McEstimate, fallback: f64) -> Vec<f64> {
    estimate
        .value
        .iter()
        .zip(&estimate.coverage_mask)
        .map(|(&v, &covered)| if covered { v } else { fallback })
        .collect()
}

/// Where sampled episodes begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStates {
    Fixed(usize),
    /// Uniform over non-terminal states (exploring starts).
    UniformNonTerminal,
}

/// Roll out `count` episodes from one seeded generator.
pub fn sample_trajectories<P: Policy>(
    mdp: &TabularMdp,
    reward: &RewardTable,
    policy: &P,
    starts: StartStates,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let candidates: Vec<usize> = match starts {
        StartStates::Fixed(s) => vec![s],
        StartStates::UniformNonTerminal => (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).collect(),
    };
    if candidates.is_empty() {
        return Err(Error::Config("MDP has no non-terminal start states".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let start = if candidates.len() == 1 {
                candidates[0]
            } else {
                candidates[rng.gen_range(0..candidates.len())]
            };
            rollout_with(mdp, reward, policy, start, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Step;

    fn step(state: usize, action: usize, reward: f64, next_state: usize) -> Step {
        Step {
            state,
            action,
            reward,
            next_state,
        }
    }

    #[test]
    fn single_visit_return() {
        let t = Trajectory {
            start_state: 0,
            steps: vec![step(0, 0, 1.0, 1)],
            terminated: true,
        };
        let est = mc_state_values(&[t], 0.9, 2).unwrap();
        assert_eq!(est.value, vec![1.0, 0.0]);
        assert_eq!(est.visit_count, vec![1, 1]);
    }

    #[test]
    fn every_visit_mean() {
        // s0 visited at t=0 (return 1.0) and t=1 (return 0.5), γ=1/2.
        let t = Trajectory {
            start_state: 0,
            steps: vec![step(0, 0, 0.0, 0), step(0, 0, 0.0, 1), step(1, 0, 1.0, 1)],
            terminated: false,
        };
        let est = mc_state_values(&[t], 0.5, 2).unwrap();
        assert_eq!(est.value[0], (0.25 + 0.5) / 2.0);
        let t = Trajectory {
            start_state: 0,
            steps: vec![step(0, 0, 0.75, 0), step(0, 0, 0.5, 1)],
            terminated: true,
        };
        let est = mc_state_values(&[t], 0.5, 2).unwrap();
        assert_eq!(est.value[0], 0.75);
    }

    #[test]
    fn single_pair_coverage() {
        let t = Trajectory {
            start_state: 0,
            steps: vec![step(0, 1, 2.0, 1)],
            terminated: true,
        };
        let est = mc_q_values(&[t], 0.9, 2, 2).unwrap();
        assert_eq!(est.value[1], 2.0);
        assert_eq!(est.coverage_mask, vec![false, true, false, false]);
        assert_eq!(est.n_uncovered(), 3);
    }

    #[test]
    fn zero_reward_self_loops() {
        let t = Trajectory {
            start_state: 0,
            steps: (0..20).map(|i| step(0, i % 2, 0.0, 0)).collect(),
            terminated: false,
        };
        let est = mc_q_values(&[t], 0.9, 1, 2).unwrap();
        assert_eq!(est.value, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(mc_state_values(&[], 0.9, 2), Err(Error::Input(_))));
        assert!(matches!(mc_q_values(&[], 0.9, 2, 2), Err(Error::Input(_))));
    }

    #[test]
    fn fill_counts() {
        let t = Trajectory {
            start_state: 0,
            steps: vec![step(0, 1, 2.0, 1)],
            terminated: true,
        };
        let est = mc_q_values(&[t], 0.9, 2, 2).unwrap();
        let dense = fill_uncovered(&est, 0.0);
        assert_eq!(dense, vec![0.0, 2.0, 0.0, 0.0]);
        let all_uncovered = McEstimate::from_sums(1, 3, vec![ExactSum::new(); 3], vec![0; 3]);
        assert_eq!(fill_uncovered(&all_uncovered, 0.0), vec![0.0; 3]);
        let est = mc_state_values(
            &[Trajectory {
                start_state: 0,
                steps: vec![step(0, 0, 1.0, 1)],
                terminated: true,
            }],
            0.9,
            2,
        )
        .unwrap();
        assert_eq!(fill_uncovered(&est, -5.0), est.value);
    }
}
