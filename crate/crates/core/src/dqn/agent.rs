use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::{ForwardTrace, Mlp};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::mdp::{argmax, discounted_return, rollout, DeterministicPolicy, RewardTable, TabularMdp};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub episodes: usize,
    /// Environment steps per training episode; the environment is reset
    /// whenever it terminates or hits its horizon limit inside an episode.
    pub steps_per_episode: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub target_update_period: usize,
    /// Interpolation factor of each target sync; 1 is a hard copy.
    pub target_update_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            steps_per_episode: 100,
            batch_size: 1024,
            gamma: 0.99,
            learning_rate: 1e-3,
            hidden_dim: 24,
            target_update_period: 8,
            target_update_rate: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 10_000,
            buffer_capacity: 50_000,
            warmup: 1024,
            huber_delta: 1.0,
            seed: 0,
        }
    }
}

impl DqnConfig {
    /// One gradient step is attempted per environment step.
    pub fn total_gradient_steps(&self) -> usize {
        self.episodes * self.steps_per_episode
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("steps_per_episode", self.steps_per_episode),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
            ("target_update_period", self.target_update_period),
            ("buffer_capacity", self.buffer_capacity),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.huber_delta > 0.0) {
            return Err(Error::Config("learning rate and Huber delta must be positive".into()));
        }
        if !(self.target_update_rate > 0.0 && self.target_update_rate <= 1.0) {
            return Err(Error::Config("target update rate must lie in (0, 1]".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Config("replay capacity is smaller than one batch".into()));
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon_at(&self, env_step: usize) -> f64 {
        if self.epsilon_decay_steps == 0 || env_step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = env_step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

pub fn huber(error: f64, delta: f64) -> f64 {
    let abs = error.abs();
    if abs <= delta {
        0.5 * error * error
    } else {
        delta * (abs - 0.5 * delta)
    }
}

pub fn huber_grad(error: f64, delta: f64) -> f64 {
    error.clamp(-delta, delta)
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// DQN on a tabular MDP with one-hot state inputs.
///
/// A minibatch only ever contains as many distinct states as the MDP has,
/// so forward passes are computed once per distinct state and per-sample
/// output gradients are summed per state before backpropagation. Both are
/// exact rewrites of the per-sample computation.
pub struct DqnTrainer<'a> {
    cfg: DqnConfig,
    mdp: &'a TabularMdp,
    reward: &'a RewardTable,
    start: usize,
    online: Mlp,
    target: Mlp,
    adam: AdamState,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    state: usize,
    env_episode_len: usize,
    env_steps: usize,
    grad_steps: usize,
    last_loss: Option<f64>,
}

impl<'a> DqnTrainer<'a> {
    pub fn new(mdp: &'a TabularMdp, reward: &'a RewardTable, start: usize, cfg: DqnConfig) -> Result<Self> {
        cfg.validate()?;
        mdp.check_reward(reward)?;
        if start >= mdp.n_states() || mdp.is_terminal(start) {
            return Err(Error::Config(format!("start state {start} is out of range or terminal")));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dqn-init", 0));
        let online = Mlp::new_uniform(&[mdp.n_states(), cfg.hidden_dim, mdp.n_actions()], &mut init_rng)?;
        let target = online.clone();
        let adam = AdamState::new(online.n_params(), cfg.learning_rate);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(cfg.seed, "dqn-replay", 0))?;
        Ok(Self {
            explore_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dqn-explore", 0)),
            env_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "dqn-env", 0)),
            cfg,
            mdp,
            reward,
            start,
            online,
            target,
            adam,
            buffer,
            state: start,
            env_episode_len: 0,
            env_steps: 0,
            grad_steps: 0,
            last_loss: None,
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn grad_steps(&self) -> usize {
        self.grad_steps
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    fn q_values(net: &Mlp, state: usize) -> Vec<f64> {
        net.forward(&one_hot(net.input_dim(), state)).expect("input sized by construction")
    }

    /// Online-network Q-values of every state.
    pub fn q_table(&self) -> Vec<Vec<f64>> {
        (0..self.mdp.n_states()).map(|s| Self::q_values(&self.online, s)).collect()
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy {
            action_of: self.q_table().iter().map(|q| argmax(q)).collect(),
        }
    }

    /// Roll the greedy policy out once from the start state and return its
    /// discounted return under `eval_reward`.
    pub fn evaluate(&self, eval_reward: &RewardTable) -> Result<f64> {
        let policy = self.greedy_policy();
        let trajectory = rollout(self.mdp, eval_reward, &policy, self.start, derive_seed(self.cfg.seed, "dqn-eval", 0))?;
        Ok(discounted_return(&trajectory, self.mdp.gamma()))
    }

    /// One environment step, followed by a gradient step once the buffer
    /// holds a full batch and the warm-up is over.
    pub fn env_step(&mut self) -> Result<()> {
        let eps = self.cfg.epsilon_at(self.env_steps);
        let action = if self.explore_rng.gen::<f64>() < eps {
            self.explore_rng.gen_range(0..self.mdp.n_actions())
        } else {
            argmax(&Self::q_values(&self.online, self.state))
        };
        let next_state = self.mdp.sample_next(self.state, action, &mut self.env_rng);
        let done = self.mdp.is_terminal(next_state);
        self.buffer.push(Transition {
            state: self.state,
            action,
            reward: self.reward.get(self.state, action),
            next_state,
            done,
        });
        self.env_steps += 1;
        self.env_episode_len += 1;
        if done || self.env_episode_len >= self.mdp.horizon_limit() {
            self.state = self.start;
            self.env_episode_len = 0;
        } else {
            self.state = next_state;
        }

        if self.buffer.len() >= self.cfg.batch_size.max(self.cfg.warmup) {
            self.gradient_step()?;
        }
        Ok(())
    }

    fn gradient_step(&mut self) -> Result<()> {
        let batch = self.buffer.sample(self.cfg.batch_size)?;
        let n_s = self.mdp.n_states();
        let n_a = self.mdp.n_actions();

        let mut target_q: Vec<Option<f64>> = vec![None; n_s];
        let mut traces: Vec<Option<ForwardTrace>> = vec![None; n_s];
        let mut out_grads = vec![vec![0.0; n_a]; n_s];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for t in &batch {
            let bootstrap = if t.done {
                0.0
            } else {
                *target_q[t.next_state]
                    .get_or_insert_with(|| Self::q_values(&self.target, t.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max))
            };
            let y = t.reward + self.cfg.gamma * bootstrap;
            let trace = traces[t.state].get_or_insert_with(|| {
                self.online
                    .forward_trace(&one_hot(n_s, t.state))
                    .expect("input sized by construction")
            });
            let err = trace.output()[t.action] - y;
            loss += huber(err, self.cfg.huber_delta);
            out_grads[t.state][t.action] += scale * huber_grad(err, self.cfg.huber_delta);
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.grad_steps,
                loss,
            });
        }

        let mut grads = vec![0.0; self.online.n_params()];
        for (trace, g) in traces.iter().zip(&out_grads) {
            if let Some(trace) = trace {
                self.online.accumulate_gradient(trace, g, &mut grads);
            }
        }
        self.adam.step(self.online.params_mut(), &grads)?;
        self.grad_steps += 1;
        self.last_loss = Some(loss);
        if self.grad_steps.is_multiple_of(self.cfg.target_update_period) {
            self.target.soft_update_from(&self.online, self.cfg.target_update_rate);
        }
        Ok(())
    }
}

/// Train on `reward`, evaluating the greedy policy under `eval_reward` at
/// the end of every episode.
pub fn dqn_train(
    mdp: &TabularMdp,
    reward: &RewardTable,
    eval_reward: &RewardTable,
    start: usize,
    cfg: &DqnConfig,
) -> Result<Vec<f64>> {
    mdp.check_reward(eval_reward)?;
    let mut trainer = DqnTrainer::new(mdp, reward, start, cfg.clone())?;
    let mut returns = Vec::with_capacity(cfg.episodes);
    for _ in 0..cfg.episodes {
        for _ in 0..cfg.steps_per_episode {
            trainer.env_step()?;
        }
        returns.push(trainer.evaluate(eval_reward)?);
    }
    Ok(returns)
}
