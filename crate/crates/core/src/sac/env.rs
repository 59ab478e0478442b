use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::obs::Obs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Obs,
    pub reward: f64,
    /// The episode ended in a terminal state; no bootstrapping past it.
    pub terminal: bool,
    /// The episode was cut off by a time or step limit.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn ended(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A reinforcement-learning task with continuous actions in `[-1, 1]^n`.
pub trait Environment: Send {
    fn action_dim(&self) -> usize;
    /// Starts a new episode. The seed fully determines the episode's randomness.
    fn reset(&mut self, seed: u64) -> Result<Obs>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}

/// One-dimensional double integrator that should be driven to the origin.
///
/// State `(x, v)`, action `u ∈ [-1, 1]` is an acceleration, `dt = 0.1`, episodes last
/// 100 steps from `x0 ~ U[-2, 2]`, `v0 = 0`. Reward `max(0, 1 − |x|/2) − 0.01 u²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    pub x: f64,
    pub v: f64,
    pub t: usize,
}

impl PointMass {
    pub const DT: f64 = 0.1;
    pub const HORIZON: usize = 100;

    pub fn new() -> Self {
        Self { x: 0.0, v: 0.0, t: 0 }
    }

    pub fn start_at(&mut self, x0: f64) -> Obs {
        self.x = x0;
        self.v = 0.0;
        self.t = 0;
        self.obs()
    }

    fn obs(&self) -> Obs {
        Obs::Vector(vec![self.x / 2.0, self.v])
    }

    pub fn reward(x: f64, u: f64) -> f64 {
        (1.0 - x.abs() / 2.0).max(0.0) - 0.01 * u * u
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Result<Obs> {
        let x0 = ChaCha8Rng::seed_from_u64(seed).gen_range(-2.0..=2.0);
        Ok(self.start_at(x0))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let u = match action {
            [u] if u.is_finite() => u.clamp(-1.0, 1.0),
            _ => return Err(Error::InvalidInput(format!("point mass takes one finite action, got {action:?}"))),
        };
        if self.t >= Self::HORIZON {
            return Err(Error::InvalidInput("step after the episode ended".into()));
        }
        self.v += u * Self::DT;
        self.x += self.v * Self::DT;
        self.t += 1;
        Ok(StepOutcome { obs: self.obs(), reward: Self::reward(self.x, u), terminal: false, truncated: self.t >= Self::HORIZON })
    }
}

/// Evenly spaced start positions used to score point-mass policies.
pub fn point_mass_starts(n: usize) -> Vec<f64> {
    (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1).max(1) as f64).collect()
}

/// Mean undiscounted return of a deterministic policy over the given starts.
pub fn point_mass_score(starts: &[f64], mut policy: impl FnMut(&Obs) -> Result<f64>) -> Result<f64> {
    let mut total = 0.0;
    for &x0 in starts {
        let mut env = PointMass::new();
        let mut obs = env.start_at(x0);
        loop {
            let out = env.step(&[policy(&obs)?])?;
            total += out.reward;
            if out.ended() {
                break;
            }
            obs = out.obs;
        }
    }
    Ok(total / starts.len() as f64)
}

/// Best saturated PD law `u = clamp(−kp·x − kd·v)` found by grid search, with its score.
pub fn point_mass_oracle(starts: &[f64]) -> (f64, f64, f64) {
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..=40 {
        for j in 0..=40 {
            let (kp, kd) = (0.25 * i as f64, 0.25 * j as f64);
            let score = point_mass_score(starts, |o| match o {
                Obs::Vector(s) => Ok((-kp * 2.0 * s[0] - kd * s[1]).clamp(-1.0, 1.0)),
                _ => unreachable!(),
            })
            .expect("point mass rollout");
            if score > best.2 {
                best = (kp, kd, score);
            }
        }
    }
    best
}
