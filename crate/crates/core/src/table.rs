use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `[state][action]` matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StateActionTable {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            data: vec![value; n_states * n_actions],
        }
    }

    pub fn from_flat(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::Config(format!(
                "table of {} entries cannot be shaped {n_states}x{n_actions}",
                data.len()
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            data,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Config("ragged state-action table".into()));
        }
        Self::from_flat(n_states, n_actions, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                data.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            data,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.data[s * self.n_actions + a] = value;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_actions.max(1)).take(self.n_states)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute entry, 0 for an empty table.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn row_max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for StateActionTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<StateActionTable> for Vec<Vec<f64>> {
    fn from(t: StateActionTable) -> Self {
        t.to_rows()
    }
}
