use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Target smoothing factor.
    pub tau: f64,
    pub target_entropy: f64,
    /// Gradient updates per environment step.
    pub utd_ratio: f64,
    pub initial_temperature: f64,
    pub auto_temperature: bool,
    /// Step size of the plain gradient step on log-temperature.
    pub temperature_lr: f64,
    /// Uniform-random action steps before the first update.
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 3e-4,
            batch_size: 256,
            tau: 0.02,
            target_entropy: -2.0,
            utd_ratio: 0.5,
            initial_temperature: 0.1,
            auto_temperature: true,
            temperature_lr: 3e-4,
            warmup_steps: 2000,
            buffer_capacity: super::replay::DEFAULT_CAPACITY,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the buffer");
        }
        if !(self.lr > 0.0 && self.temperature_lr >= 0.0 && self.initial_temperature > 0.0) {
            return bad("learning rates and initial temperature must be positive");
        }
        if !(self.utd_ratio > 0.0 && self.utd_ratio.is_finite()) {
            return bad("update-to-data ratio must be positive");
        }
        Ok(())
    }
}

/// Converts environment steps into update calls at a fixed ratio.
///
/// Credit accumulates per step and each whole unit of credit pays for one update, so
/// the long-run ratio is exact and no floating-point drift builds up for ratios that
/// are dyadic fractions such as 0.5.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UtdScheduler {
    ratio: f64,
    credit: f64,
}

impl UtdScheduler {
    pub fn new(ratio: f64) -> Self {
        Self { ratio, credit: 0.0 }
    }

    /// Number of updates owed after one more environment step.
    pub fn on_env_step(&mut self) -> usize {
        self.credit += self.ratio;
        let n = self.credit.floor();
        self.credit -= n;
        n as usize
    }
}
