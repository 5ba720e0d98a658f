//! Fixed-capacity FIFO replay memory.

use rand::seq::index;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// `batch` distinct entries drawn uniformly, or `None` if too few are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Running mean and standard deviation of raw rewards (Welford). Stored
/// rewards are `scale·(r − mean)/std` under the statistics seen so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardNormalizer {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RewardNormalizer {
    pub fn observe(&mut self, r: f64) {
        self.count += 1;
        let d = r - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (r - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation, 1 until two rewards have been seen.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / self.count as f64).sqrt().max(1e-6)
        }
    }

    pub fn normalize(&self, r: f64) -> f64 {
        (r - self.mean) / self.std()
    }
}
