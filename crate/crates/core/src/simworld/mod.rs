//! Two-dimensional lane world: kinematic vehicle, road maps, ground-truth semantic
//! rendering, event detection and per-episode domain randomization.

mod events;
mod map;
mod obstacle;
mod randomize;
mod render;

pub use events::{detect_events, StepEvents, STATIONARY_EPSILON};
pub use map::{
    builtin_scenarios, load_scenario, load_scenarios_from_dir, measure_lane, parse_scenario, Boundary,
    Drivability, Lane, LaneMeasure, MapSplit, Marking, RoadMap, Scenario, Topology,
};
pub use obstacle::{Motion, Obstacle};
pub use randomize::{augment, randomize_episode, AugmentConfig, EpisodeDraw, JitterRange, RandomizationConfig};
pub use render::{
    degrade, render_appearance, render_semantic, Camera, Grid, GridSpec, LabelGrid, Observation, Palette,
    PixelGrid, SemanticClass, TestRendering,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Obb, Vec2};

/// Control interval of the closed loop, seconds.
pub const DEFAULT_DT: f64 = 0.1;

/// Normalized high-level action. Both channels live in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steering: f64,
    pub throttle: f64,
}

impl Action {
    /// Clamps both components into [-1, 1]. Non-finite components pass through untouched
    /// so that callers can still detect them.
    pub fn new(steering: f64, throttle: f64) -> Self {
        Self {
            steering: clamp_unit(steering),
            throttle: clamp_unit(throttle),
        }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a.first().copied().unwrap_or(0.0), a.get(1).copied().unwrap_or(0.0))
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.steering, self.throttle]
    }

    pub fn is_finite(&self) -> bool {
        self.steering.is_finite() && self.throttle.is_finite()
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(-1.0, 1.0)
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub width: f64,
    pub length: f64,
    /// Linear drag on speed, 1/s.
    pub drag: f64,
    pub v_max: f64,
    pub max_steer: f64,
    /// Acceleration per unit throttle, m/s².
    pub accel_gain: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.6,
            width: 1.8,
            length: 4.2,
            drag: 0.1,
            v_max: 10.0,
            max_steer: 0.5,
            accel_gain: 3.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wheelbase", self.wheelbase),
            ("width", self.width),
            ("length", self.length),
            ("drag", self.drag),
            ("v_max", self.v_max),
            ("max_steer", self.max_steer),
            ("accel_gain", self.accel_gain),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("vehicle {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// The discrete set episodes draw vehicle dynamics from.
    pub fn standard_set() -> Vec<VehicleParams> {
        let base = VehicleParams::default();
        vec![
            base,
            VehicleParams { wheelbase: 2.3, width: 1.6, length: 3.7, drag: 0.08, accel_gain: 3.6, max_steer: 0.55, ..base },
            VehicleParams { wheelbase: 3.0, width: 2.0, length: 4.9, drag: 0.14, accel_gain: 2.4, max_steer: 0.45, ..base },
            VehicleParams { wheelbase: 2.8, width: 1.9, length: 4.5, drag: 0.12, accel_gain: 2.8, max_steer: 0.42, v_max: 9.0, ..base },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in (-π, π].
    pub heading: f64,
    pub speed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading), speed }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn footprint(&self, params: &VehicleParams) -> Obb {
        Obb::new(self.position(), self.heading, params.length, params.width)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }
}

/// Advances the kinematic bicycle by one interval.
///
/// Heading integrates `v·tan(δ)/L` with the speed at the start of the interval; the
/// position follows the chord of that arc. Speed integrates `gain·τ - drag·v` and is
/// clamped to `[0, v_max]`.
pub fn step(state: &VehicleState, action: &Action, params: &VehicleParams, dt: f64) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive and finite, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite vehicle state {state:?}")));
    }
    if !action.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite action {action:?}")));
    }
    let steer = action.steering.clamp(-1.0, 1.0) * params.max_steer;
    let throttle = action.throttle.clamp(-1.0, 1.0);
    let v = state.speed;
    let dpsi = v * steer.tan() / params.wheelbase * dt;
    let mid = state.heading + 0.5 * dpsi;
    let chord = if dpsi.abs() > 1e-12 {
        v * dt * (0.5 * dpsi).sin() / (0.5 * dpsi)
    } else {
        v * dt
    };
    let speed = (v + (params.accel_gain * throttle - params.drag * v) * dt).clamp(0.0, params.v_max);
    Ok(VehicleState {
        x: state.x + chord * mid.cos(),
        y: state.y + chord * mid.sin(),
        heading: wrap_angle(state.heading + dpsi),
        speed,
    })
}
