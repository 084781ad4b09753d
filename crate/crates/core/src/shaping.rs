//! Planning-aware potential-based reward shaping.
//!
//! The potential is chosen to minimise the one-step-lookahead horizon
//! criterion
//!
//! ```text
//! ℓ(Φ; R₀) = max_{s,a} (Q₀^rand(s,a) − Φ(s)) (V₀*(s) − Φ(s)) / Δ₀(s)²
//! ```
//!
//! where Δ₀ is the action gap of the uniform-random Q-function. Shaping
//! shifts every Q-function by −Φ(s), so Δ does not depend on Φ and each
//! state's term is an upward parabola in Φ(s) whose vertex (for the maximising
//! action) is the midpoint of `max_a Q₀^rand(s,a)` and `V₀*(s)`.
//!
//! Potentials are pinned to zero on terminal states: episodes stop there, so
//! a nonzero terminal potential would reward arriving early or late and break
//! policy invariance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{value_iteration, QFunction, RewardTable, TabularMdp, ValueFunction};
use crate::table::StateActionTable;

/// Two action values closer than this count as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Potential {
    pub phi: Vec<f64>,
}

impl Potential {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("potential has non-finite entries".into()));
        }
        Ok(Self { phi })
    }

    pub fn zeros(n_states: usize) -> Self {
        Self {
            phi: vec![0.0; n_states],
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// The potential as seen by the dynamics: zero on terminal states.
    pub fn effective(&self, mdp: &TabularMdp) -> Vec<f64> {
        self.phi
            .iter()
            .enumerate()
            .map(|(s, &p)| if mdp.is_terminal(s) { 0.0 } else { p })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapVector {
    /// 0 where degenerate.
    pub delta: Vec<f64>,
    pub degenerate_mask: Vec<bool>,
}

impl GapVector {
    pub fn n_degenerate(&self) -> usize {
        self.degenerate_mask.iter().filter(|d| **d).count()
    }
}

/// `Φ(s) = (max_a Q^rand(s,a) + V*(s)) / 2`.
pub fn potential_from_values(q_rand: &QFunction, v_star: &ValueFunction) -> Result<Potential> {
    if q_rand.n_states() != v_star.len() {
        return Err(Error::Config(format!(
            "Q has {} states but V has {}",
            q_rand.n_states(),
            v_star.len()
        )));
    }
    if !q_rand.is_finite() || v_star.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("value estimates contain non-finite entries".into()));
    }
    Ok(Potential {
        phi: (0..v_star.len())
            .map(|s| (q_rand.row_max(s) + v_star[s]) / 2.0)
            .collect(),
    })
}

/// `R_Φ(s,a) = R₀(s,a) + γ Σ_{s'} P(s'|s,a) Φ(s') − Φ(s)`, with the
/// expectation taken exactly over the transition row.
pub fn shape_reward(mdp: &TabularMdp, r0: &RewardTable, phi: &Potential) -> Result<RewardTable> {
    mdp.check_reward(r0)?;
    if phi.len() != mdp.n_states() {
        return Err(Error::Config(format!(
            "potential has {} entries, MDP has {} states",
            phi.len(),
            mdp.n_states()
        )));
    }
    let eff = phi.effective(mdp);
    let gamma = mdp.gamma();
    Ok(RewardTable(StateActionTable::from_fn(
        mdp.n_states(),
        mdp.n_actions(),
        |s, a| r0.get(s, a) + gamma * mdp.expectation(s, a, &eff) - eff[s],
    )))
}

pub fn action_gap(q: &QFunction) -> GapVector {
    action_gap_with_tol(q, DEFAULT_TIE_TOL)
}

/// Gap between the best action value and the best value outside the
/// (tolerance-widened) argmax set.
pub fn action_gap_with_tol(q: &QFunction, tie_tol: f64) -> GapVector {
    let mut delta = Vec::with_capacity(q.n_states());
    let mut degenerate_mask = Vec::with_capacity(q.n_states());
    for row in q.rows() {
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let runner_up = row
            .iter()
            .copied()
            .filter(|&x| best - x > tie_tol)
            .fold(f64::NEG_INFINITY, f64::max);
        if runner_up == f64::NEG_INFINITY {
            delta.push(0.0);
            degenerate_mask.push(true);
        } else {
            delta.push(best - runner_up);
            degenerate_mask.push(false);
        }
    }
    GapVector {
        delta,
        degenerate_mask,
    }
}

/// One state's term of the horizon criterion at potential value `phi_s`,
/// or `None` for a degenerate state.
pub fn state_criterion(
    q_rand0: &QFunction,
    v_star0: &ValueFunction,
    gaps: &GapVector,
    s: usize,
    phi_s: f64,
) -> Option<f64> {
    if gaps.degenerate_mask[s] {
        return None;
    }
    let v = v_star0[s] - phi_s;
    let worst = q_rand0
        .row(s)
        .iter()
        .map(|&q| (q - phi_s) * v)
        .fold(f64::NEG_INFINITY, f64::max);
    Some(worst / (gaps.delta[s] * gaps.delta[s]))
}

/// ℓ(Φ; R₀): the largest per-state term over non-degenerate states. This is
/// the raw ratio; it is negative near the optimum, where a logarithm would
/// be undefined.
pub fn horizon_criterion(
    q_rand0: &QFunction,
    v_star0: &ValueFunction,
    gaps: &GapVector,
    phi: &Potential,
) -> Result<f64> {
    let n = q_rand0.n_states();
    if v_star0.len() != n || gaps.delta.len() != n || phi.len() != n {
        return Err(Error::Config("criterion inputs disagree on the number of states".into()));
    }
    (0..n)
        .filter_map(|s| state_criterion(q_rand0, v_star0, gaps, s, phi.phi[s]))
        .reduce(f64::max)
        .ok_or(Error::UndefinedCriterion)
}

/// Optimal action set per non-terminal state: every action within `tol` of
/// the state's best Q* value. Terminal states get an empty set.
pub fn optimal_action_sets(mdp: &TabularMdp, reward: &RewardTable, tol: f64) -> Result<Vec<Vec<usize>>> {
    // Solve well below the tie threshold so solver error cannot split a tie.
    let solution = value_iteration(mdp, reward, tol * 1e-2)?;
    Ok((0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                return Vec::new();
            }
            let best = solution.q.row_max(s);
            (0..mdp.n_actions())
                .filter(|&a| best - solution.q.get(s, a) <= tol)
                .collect()
        })
        .collect())
}

/// Whether two rewards induce the same optimal action sets everywhere.
pub fn verify_policy_invariance(
    mdp: &TabularMdp,
    r_a: &RewardTable,
    r_b: &RewardTable,
    tol: f64,
) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    Ok(optimal_action_sets(mdp, r_a, tol)? == optimal_action_sets(mdp, r_b, tol)?)
}
