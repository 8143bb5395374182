use alloc::vec::Vec;

use rand::Rng as _;

use crate::mdp::Transition;
use crate::nn::Network;

/// Fixed-capacity ring of transitions with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: crate::Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0, rng: crate::seeded_rng(seed) }
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

    /// Appends, overwriting the oldest record once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `k` records drawn uniformly with replacement.
    pub fn sample(&mut self, k: usize) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| self.items[self.rng.gen_range(0..self.items.len())]).collect()
    }

    /// Indices of a uniform sample, for frequency tests.
    pub fn sample_indices(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.rng.gen_range(0..self.items.len())).collect()
    }
}

/// Online network `theta` with its frozen copy `theta*`.
#[derive(Debug, Clone)]
pub struct TargetNetworkPair {
    pub online: Network,
    pub target: Network,
    /// Hard-copy period in steps.
    pub period: usize,
    /// Per-step polyak rate; overrides hard copies when set.
    pub tau: Option<f64>,
    syncs: usize,
}

impl TargetNetworkPair {
    pub fn new(online: Network, period: usize, tau: Option<f64>) -> Self {
        let target = online.clone();
        Self { online, target, period: period.max(1), tau, syncs: 0 }
    }

    /// Number of target updates performed.
    pub fn syncs(&self) -> usize {
        self.syncs
    }

    /// Polyak blend each step, or hard copy when `step % period == 0`.
    pub fn sync(&mut self, step: usize) {
        match self.tau {
            Some(tau) => {
                self.target.polyak_from(&self.online, tau);
                self.syncs += 1;
            }
            None if step % self.period == 0 => {
                self.target.copy_from(&self.online);
                self.syncs += 1;
            }
            None => {}
        }
    }
}

/// Stores `transition` (if any) and applies the target update for `step`.
pub fn replay_and_sync(
    buffer: &mut ReplayBuffer,
    pair: &mut TargetNetworkPair,
    step: usize,
    transition: Option<Transition>,
) {
    if let Some(t) = transition {
        buffer.push(t);
    }
    pair.sync(step);
}
