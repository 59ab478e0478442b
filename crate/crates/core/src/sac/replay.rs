use rand::Rng;

use super::obs::Obs;
use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Obs,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Obs,
    /// True only for terminal states; time-limit truncations keep bootstrapping.
    pub done: bool,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        if !self.reward.is_finite() || !self.action.iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidInput("transition holds a non-finite reward or action".into()));
        }
        Ok(())
    }
}

/// Ring buffer. Storage grows on demand up to the capacity, so a large capacity costs
/// nothing until it is used.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    slots: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self { capacity, slots: Vec::new(), next: 0, inserted: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total insertions, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn insert(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if self.slots.len() < self.capacity {
            self.slots.push(t);
        } else {
            self.slots[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.slots.is_empty() || n == 0 {
            return Err(Error::InvalidInput(format!("cannot sample {n} from {} stored transitions", self.slots.len())));
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.slots.len())).collect())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.slots[i]
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.slots[i]).collect())
    }
}
