//! Planning-aware reward shaping on tabular MDPs.
//!
//! A potential built from the optimal value function and the uniform-random
//! Q-function shifts the reward without changing which actions are optimal,
//! while minimising a one-step bound on the effective planning horizon. The
//! crate provides the tabular machinery to compute and verify that potential,
//! a MaxEnt IRL baseline, and a small DQN used to measure how quickly each
//! reward can be learned.

pub mod dqn;
pub mod error;
pub mod estimators;
pub mod gridworld;
pub mod harness;
pub mod io;
pub mod maxent;
pub mod mdp;
pub mod seeds;
pub mod shaping;
pub mod sum;
pub mod table;

pub use error::{Error, Result};
pub use gridworld::{build_gridworld, GridSpec};
pub use mdp::{
    greedy_policy, policy_evaluation, rollout, value_iteration, DeterministicPolicy, QFunction, RewardTable,
    StochasticPolicy, TabularMdp, Trajectory, ValueFunction,
};
pub use shaping::{action_gap, horizon_criterion, potential_from_values, shape_reward, verify_policy_invariance, Potential};
pub use table::StateActionTable;
