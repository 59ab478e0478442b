//! Shaped lane-keeping reward.
//!
//! The total is `r_speed · r_center · r_heading − r_penalty`. Multiplying the three
//! shaping terms makes them act as a soft AND: a zero in any factor zeroes the whole
//! product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simworld::StepEvents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub v_min: f64,
    pub v_target: f64,
    pub v_max: f64,
    pub d_max: f64,
    pub alpha_max: f64,
    pub w_collision: f64,
    pub w_solid: f64,
    pub w_double_solid: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            v_min: 1.0,
            v_target: 5.0,
            v_max: 10.0,
            d_max: 1.75,
            alpha_max: std::f64::consts::FRAC_PI_2,
            w_collision: 25.0,
            w_solid: 12.0,
            w_double_solid: 15.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.v_min > 0.0
            && self.v_min <= self.v_target
            && self.v_target < self.v_max
            && self.d_max > 0.0
            && self.alpha_max > 0.0
            && self.alpha_max <= std::f64::consts::PI
            && self.w_collision >= 0.0
            && self.w_solid >= 0.0
            && self.w_double_solid >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reward configuration {self:?}")))
        }
    }
}

/// Linear ramp up to `v_min`, flat to `v_target`, linear decay to zero at `v_max`.
pub fn speed_reward(v: f64, cfg: &RewardConfig) -> Result<f64> {
    if !(v >= 0.0 && v <= cfg.v_max) {
        return Err(Error::InvalidInput(format!("speed {v} outside [0, {}]", cfg.v_max)));
    }
    Ok(if v < cfg.v_min {
        v / cfg.v_min
    } else if v <= cfg.v_target {
        1.0
    } else {
        1.0 - (v - cfg.v_target) / (cfg.v_max - cfg.v_target)
    })
}

pub fn center_reward(d: f64, cfg: &RewardConfig) -> f64 {
    (1.0 - d / cfg.d_max).clamp(0.0, 1.0)
}

pub fn heading_reward(alpha: f64, cfg: &RewardConfig) -> f64 {
    (1.0 - alpha / cfg.alpha_max).clamp(0.0, 1.0)
}

pub fn penalty(events: &StepEvents, cfg: &RewardConfig) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    cfg.w_collision * ind(events.collision)
        + cfg.w_solid * ind(events.crossed_solid)
        + cfg.w_double_solid * ind(events.crossed_double_solid)
}

pub fn total_reward(v: f64, d: f64, alpha: f64, events: &StepEvents, cfg: &RewardConfig) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidInput(format!("lane distance {d} must be non-negative")));
    }
    if !(0.0..=std::f64::consts::PI).contains(&alpha) {
        return Err(Error::InvalidInput(format!("heading error {alpha} outside [0, π]")));
    }
    Ok(speed_reward(v, cfg)? * center_reward(d, cfg) * heading_reward(alpha, cfg) - penalty(events, cfg))
}
