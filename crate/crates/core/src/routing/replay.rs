use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::StateVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    /// Action mask at `next_state`, used to restrict the bootstrap maximum.
    pub next_mask: Vec<bool>,
    pub terminal: bool,
}

/// Fixed-capacity ring of experiences.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Experience>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stores `e`, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience) {
        if self.entries.len() < self.capacity {
            self.entries.push(e);
        } else {
            self.entries[self.head] = e;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// `n` distinct entries chosen uniformly; all of them if fewer exist.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        let n = n.min(self.entries.len());
        rand::seq::index::sample(rng, self.entries.len(), n)
            .into_iter()
            .map(|i| &self.entries[i])
            .collect()
    }
}
