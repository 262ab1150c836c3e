//! Ring-buffer replay memory with proportional prioritization.
//!
//! Item `i` is drawn with probability `p_i^α / Σ p_j^α`, where `p_i` is
//! `|δ_i| + ε` after its last priority update and the running maximum
//! priority when it is first stored. Sampling walks a sum tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use mec_core::{Observation, ACTION_DIM};

use crate::error::LearnError;

/// One environment step as stored for training. Actions are the scaled
/// `[0, 1]` client actions the environment consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub states: Vec<Observation>,
    pub actions: Vec<[f64; ACTION_DIM]>,
    pub accepted: Vec<bool>,
    pub reward: f64,
    pub next_states: Vec<Observation>,
    pub done: bool,
}

impl Transition {
    pub fn devices(&self) -> usize {
        self.states.len()
    }

    pub fn check(&self, devices: usize) -> Result<(), LearnError> {
        for (what, got) in [
            ("transition states", self.states.len()),
            ("transition actions", self.actions.len()),
            ("transition mask", self.accepted.len()),
            ("transition next states", self.next_states.len()),
        ] {
            if got != devices {
                return Err(LearnError::Dimension {
                    what,
                    expected: devices,
                    got,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerParams {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub epsilon: f64,
}

impl Default for PerParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            epsilon: 1e-6,
        }
    }
}

impl PerParams {
    /// Importance-sampling exponent after `progress ∈ [0, 1]` of training.
    pub fn beta(&self, progress: f64) -> f64 {
        self.beta_start + (self.beta_end - self.beta_start) * progress.clamp(0.0, 1.0)
    }

    /// Uniform replay: every stored item equally likely, unit weights.
    pub fn uniform() -> Self {
        Self {
            alpha: 0.0,
            beta_start: 0.0,
            beta_end: 0.0,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut node = self.leaves + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.nodes[left] || self.nodes[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }
}

/// A prioritized minibatch: positions in the memory and normalized
/// importance weights, aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    params: PerParams,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize, params: PerParams) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            params,
        }
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

    pub fn params(&self) -> &PerParams {
        &self.params
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    /// Stores `item` at maximum priority, evicting the oldest entry once full.
    pub fn push(&mut self, item: T) -> usize {
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.tree.set(slot, self.max_priority.powf(self.params.alpha));
        self.next = (slot + 1) % self.capacity;
        slot
    }

    /// Sampling probability of every stored item.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.tree.total();
        (0..self.items.len()).map(|i| self.tree.get(i) / total).collect()
    }

    /// Draws `batch` positions with replacement.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut impl Rng) -> Result<SampledBatch, LearnError> {
        if self.items.is_empty() {
            return Err(LearnError::EmptyMemory);
        }
        if batch > self.items.len() {
            return Err(LearnError::InsufficientMemory {
                needed: batch,
                have: self.items.len(),
            });
        }
        let total = self.tree.total();
        let size = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mass = rng.random::<f64>() * total;
            let mut i = self.tree.find(mass);
            if i >= self.items.len() || self.tree.get(i) <= 0.0 {
                // Rounding at the right edge of the tree.
                i = (0..self.items.len())
                    .rev()
                    .find(|&j| self.tree.get(j) > 0.0)
                    .unwrap_or(0);
            }
            let p = self.tree.get(i) / total;
            indices.push(i);
            weights.push((size * p).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok(SampledBatch { indices, weights })
    }

    /// Sets the priorities of `indices` from their new TD errors.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &delta) in indices.iter().zip(td_errors) {
            let p = if delta.is_finite() {
                delta.abs() + self.params.epsilon
            } else {
                self.max_priority
            };
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.params.alpha));
        }
    }
}
