//! Deterministic gridworld with a single absorbing goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, TabularMdp};
use crate::table::StateActionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// `(row, col)`
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    pub horizon_limit: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            start: (0, 0),
            goal: (4, 4),
            step_reward: 0.0,
            goal_reward: 1.0,
            gamma: 0.99,
            horizon_limit: 100,
        }
    }
}

impl GridSpec {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    /// Row-major state index.
    pub fn index(&self, (row, col): (usize, usize)) -> usize {
        row * self.width + col
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s / self.width, s % self.width)
    }

    pub fn start_state(&self) -> usize {
        self.index(self.start)
    }

    pub fn goal_state(&self) -> usize {
        self.index(self.goal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "degenerate grid {}x{}",
                self.height, self.width
            )));
        }
        let inside = |(r, c): (usize, usize)| r < self.height && c < self.width;
        if !inside(self.start) || !inside(self.goal) {
            return Err(Error::Config("start and goal must lie inside the grid".into()));
        }
        if self.start == self.goal {
            return Err(Error::Config("start and goal must differ".into()));
        }
        if !self.step_reward.is_finite() || !self.goal_reward.is_finite() {
            return Err(Error::Input("grid rewards must be finite".into()));
        }
        Ok(())
    }

    /// Cell reached by `mv`; moves off the grid leave the agent in place.
    pub fn neighbour(&self, s: usize, mv: Move) -> usize {
        let (row, col) = self.cell(s);
        let (dr, dc) = mv.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            s
        } else {
            self.index((r as usize, c as usize))
        }
    }

    pub fn manhattan_to_goal(&self, s: usize) -> usize {
        let (r, c) = self.cell(s);
        r.abs_diff(self.goal.0) + c.abs_diff(self.goal.1)
    }
}

pub fn build_gridworld(spec: &GridSpec) -> Result<(TabularMdp, RewardTable)> {
    spec.validate()?;
    let n = spec.n_states();
    let n_actions = Move::ALL.len();
    let goal = spec.goal_state();
    let mut transitions = vec![0.0; n * n_actions * n];
    let mut rewards = StateActionTable::zeros(n, n_actions);
    for s in 0..n {
        for mv in Move::ALL {
            let next = if s == goal { s } else { spec.neighbour(s, mv) };
            transitions[(s * n_actions + mv.index()) * n + next] = 1.0;
            if s != goal {
                let r = if next == goal {
                    spec.goal_reward
                } else {
                    spec.step_reward
                };
                rewards.set(s, mv.index(), r);
            }
        }
    }
    let terminal = (0..n).map(|s| s == goal).collect();
    let mdp = TabularMdp::new(n, n_actions, spec.gamma, transitions, terminal, spec.horizon_limit)?;
    Ok((mdp, RewardTable(rewards)))
}
