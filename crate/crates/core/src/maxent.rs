//! Maximum-entropy IRL with one-hot state features.
//!
//! The soft backward pass runs over a finite, undiscounted horizon. A
//! terminal state collects its weight once and ends the episode, matching how
//! demonstrations count the terminal entry a single time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, TabularMdp, Trajectory};
use crate::table::StateActionTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxEntConfig {
    pub learning_rate: f64,
    pub n_iterations: usize,
    pub horizon: usize,
    /// Stop early once the gradient's sup norm falls below this.
    pub grad_tol: f64,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            n_iterations: 200,
            horizon: 100,
            grad_tol: 1e-6,
        }
    }
}

impl MaxEntConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("MaxEnt learning rate must be positive".into()));
        }
        if self.n_iterations == 0 || self.horizon == 0 {
            return Err(Error::Config("MaxEnt iterations and horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntResult {
    pub reward: RewardTable,
    pub weights: Vec<f64>,
    /// `(iteration, ‖gradient‖∞)` for every iteration run.
    pub convergence: Vec<(usize, f64)>,
    pub converged: bool,
}

/// Mean per-episode state visitation counts of the demonstrations.
pub fn expert_feature_expectations(demos: &[Trajectory], n_states: usize) -> Result<Vec<f64>> {
    if demos.is_empty() {
        return Err(Error::Input("no demonstrations".into()));
    }
    let mut counts = vec![0.0; n_states];
    for demo in demos {
        for s in demo.states() {
            if s >= n_states {
                return Err(Error::Input(format!("demo state {s} out of range")));
            }
            counts[s] += 1.0;
        }
    }
    let n = demos.len() as f64;
    Ok(counts.into_iter().map(|c| c / n).collect())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Soft (log-sum-exp) backward recursion. Returns the stochastic policy for
/// each time step `0..horizon`.
pub fn soft_backward(mdp: &TabularMdp, weights: &[f64], horizon: usize) -> Result<Vec<StateActionTable>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if weights.len() != mdp.n_states() {
        return Err(Error::Config(format!(
            "{} weights for {} states",
            weights.len(),
            mdp.n_states()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Input("reward weights must be finite".into()));
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut v_next = vec![0.0; n_s];
    let mut v = vec![0.0; n_s];
    let mut q = vec![0.0; n_a];
    let mut policies = vec![StateActionTable::zeros(n_s, n_a); horizon];
    for t in (0..horizon).rev() {
        let policy = &mut policies[t];
        for s in 0..n_s {
            if mdp.is_terminal(s) {
                v[s] = weights[s];
                policy.row_mut(s).fill(1.0 / n_a as f64);
                continue;
            }
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = weights[s] + mdp.expectation(s, a, &v_next);
            }
            v[s] = log_sum_exp(&q);
            for (p, qa) in policy.row_mut(s).iter_mut().zip(&q) {
                *p = (qa - v[s]).exp();
            }
        }
        std::mem::swap(&mut v, &mut v_next);
    }
    if v_next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("soft values overflowed".into()));
    }
    Ok(policies)
}

/// Expected visitation counts summed over time steps `0..policies.len()`.
pub fn forward_visitation(mdp: &TabularMdp, policies: &[StateActionTable], start: &[f64]) -> Vec<f64> {
    let n_s = mdp.n_states();
    let mut d = start.to_vec();
    let mut next = vec![0.0; n_s];
    let mut total = vec![0.0; n_s];
    for (t, policy) in policies.iter().enumerate() {
        for (acc, x) in total.iter_mut().zip(&d) {
            *acc += x;
        }
        if t + 1 == policies.len() {
            break;
        }
        next.fill(0.0);
        for s in 0..n_s {
            if d[s] == 0.0 || mdp.is_terminal(s) {
                continue;
            }
            for (a, &p) in policy.row(s).iter().enumerate() {
                let mass = d[s] * p;
                for &(s2, pt) in mdp.successors(s, a) {
                    next[s2] += mass * pt;
                }
            }
        }
        std::mem::swap(&mut d, &mut next);
    }
    total
}

/// Model expected state visitation under the soft-optimal policy for
/// state rewards `weights`.
pub fn soft_backward_forward(
    mdp: &TabularMdp,
    weights: &[f64],
    start: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    if start.len() != mdp.n_states() {
        return Err(Error::Config("start distribution has the wrong length".into()));
    }
    let policies = soft_backward(mdp, weights, horizon)?;
    Ok(forward_visitation(mdp, &policies, start))
}

/// Empirical start-state distribution of the demonstrations.
pub fn start_distribution(demos: &[Trajectory], n_states: usize) -> Result<Vec<f64>> {
    if demos.is_empty() {
        return Err(Error::Input("no demonstrations".into()));
    }
    let mut dist = vec![0.0; n_states];
    for demo in demos {
        *dist
            .get_mut(demo.start_state)
            .ok_or_else(|| Error::Input(format!("demo start {} out of range", demo.start_state)))? += 1.0;
    }
    let n = demos.len() as f64;
    dist.iter_mut().for_each(|x| *x /= n);
    Ok(dist)
}

/// Gradient ascent on per-state reward weights. The learned reward ignores
/// the action.
pub fn maxent_irl(mdp: &TabularMdp, demos: &[Trajectory], cfg: &MaxEntConfig) -> Result<MaxEntResult> {
    cfg.validate()?;
    let n_s = mdp.n_states();
    let expert = expert_feature_expectations(demos, n_s)?;
    let start = start_distribution(demos, n_s)?;
    let mut weights = vec![0.0; n_s];
    let mut convergence = Vec::with_capacity(cfg.n_iterations);
    let mut converged = false;
    for iteration in 0..cfg.n_iterations {
        let model = soft_backward_forward(mdp, &weights, &start, cfg.horizon)
            .map_err(|_| Error::Diverged { iteration })?;
        let grad_norm = expert
            .iter()
            .zip(&model)
            .fold(0.0_f64, |m, (e, m_)| m.max((e - m_).abs()));
        convergence.push((iteration, grad_norm));
        if grad_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        for ((w, e), m) in weights.iter_mut().zip(&expert).zip(&model) {
            *w += cfg.learning_rate * (e - m);
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { iteration });
        }
    }
    let reward = RewardTable(StateActionTable::from_fn(n_s, mdp.n_actions(), |s, _| weights[s]));
    Ok(MaxEntResult {
        reward,
        weights,
        convergence,
        converged,
    })
}
