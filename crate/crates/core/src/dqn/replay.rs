use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// Fixed-capacity ring buffer with seeded uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `batch_size` indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return Err(Error::Config(format!(
                "cannot draw a batch of {batch_size} from {} transitions",
                self.items.len()
            )));
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| self.rng.gen_range(0..n)).collect())
    }

    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size)?
            .into_iter()
            .map(|i| self.items[i])
            .collect())
    }
}
