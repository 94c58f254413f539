use rand::seq::index;

use crate::rng::SimRng;

/// One `(s, a, r, s')` transition with normalised observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: [f64; 3],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; 3],
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; the oldest experience is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buf: Vec<Experience>,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buf: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.buf.len() < self.capacity {
            self.buf.push(e);
        } else {
            self.buf[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let (newer, older) = self.buf.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Uniform sample of `n` distinct entries (fewer if the memory is smaller).
    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Vec<&Experience> {
        let n = n.min(self.buf.len());
        index::sample(rng, self.buf.len(), n)
            .into_iter()
            .map(|i| &self.buf[i])
            .collect()
    }
}
