//! Replay memory buffer: a FIFO ring of transitions sampled uniformly with
//! replacement. States are re-rendered from `(image_id, pos)` when sampled,
//! never stored.

use rand::Rng;

use crate::grid_env::{Action, AgentPos};

/// One experience tuple. `image_id` indexes the training dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub image_id: usize,
    pub pos: AgentPos,
    pub action: Action,
    pub reward: f64,
    pub next_pos: AgentPos,
}

/// Fixed-capacity ring buffer with FIFO eviction.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be >= 1");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            cursor: 0,
        }
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

    /// Insert, evicting the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// One uniform draw (with replacement across calls).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> &Transition {
        assert!(!self.items.is_empty(), "cannot sample an empty buffer");
        &self.items[rng.gen_range(0..self.items.len())]
    }

    /// Contents oldest-first.
    pub fn iter_in_insertion_order(&self) -> impl Iterator<Item = &Transition> {
        let (tail, head) = self.items.split_at(self.cursor);
        head.iter().chain(tail.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(id: usize) -> Transition {
        Transition {
            image_id: id,
            pos: AgentPos::START,
            action: Action::Stay,
            reward: -2.0,
            next_pos: AgentPos::START,
        }
    }

    #[test]
    fn fifo_eviction_keeps_last_capacity_items() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..250 {
            buf.push(t(i));
        }
        assert_eq!(buf.len(), 100);
        let ids: Vec<usize> = buf.iter_in_insertion_order().map(|t| t.image_id).collect();
        let expect: Vec<usize> = (150..250).collect();
        assert_eq!(ids, expect);
    }

    #[test]
    fn below_capacity_keeps_everything() {
        let mut buf = ReplayBuffer::new(15_000);
        for i in 0..1800 {
            buf.push(t(i));
        }
        assert_eq!(buf.len(), 1800);
        let ids: Vec<usize> = buf.iter_in_insertion_order().map(|t| t.image_id).collect();
        assert_eq!(ids, (0..1800).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_is_uniform_over_items() {
        // chi-square over a seeded stream; critical value for 99 degrees of
        // freedom at the 0.001 level
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(t(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000usize;
        let mut counts = [0usize; 100];
        for _ in 0..draws {
            counts[buf.sample(&mut rng).image_id] += 1;
        }
        let expect = draws as f64 / 100.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expect;
                d * d / expect
            })
            .sum();
        const CHI2_CRIT_99_DOF_P001: f64 = 148.23;
        assert!(chi2 < CHI2_CRIT_99_DOF_P001, "chi2 = {chi2}");
    }
}
