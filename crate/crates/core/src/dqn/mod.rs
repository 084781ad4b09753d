//! From-scratch DQN used as a planning-depth probe.

mod adam;
mod agent;
mod mlp;
mod replay;

pub use adam::AdamState;
pub use agent::{dqn_train, huber, huber_grad, DqnConfig, DqnTrainer};
pub use mlp::{ForwardTrace, Mlp};
pub use replay::{ReplayBuffer, Transition};
