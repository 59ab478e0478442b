use serde::{Deserialize, Serialize};

use super::episode::DrivingPolicy;
use crate::drive::{DriveSim, Modality};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::sac::Obs;
use crate::simworld::Action;

/// Privileged pure-pursuit follower of the route centerline that stops for obstacles
/// in its lane.
///
/// The goal point lies `lookahead` metres further along the route than the vehicle's
/// projection. The commanded curvature `2·sin(a)/l` (with `a` the bearing of the goal
/// and `l` its distance) becomes a steering angle through the wheelbase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurePursuit {
    pub lookahead: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Comfortable deceleration assumed when deciding to stop, m/s².
    pub decel: f64,
    /// Gap kept to an obstacle ahead, m.
    pub stop_margin: f64,
}

impl Default for PurePursuit {
    fn default() -> Self {
        Self { lookahead: 6.0, speed: 5.0, decel: 1.5, stop_margin: 2.5 }
    }
}

impl PurePursuit {
    /// Whether an obstacle occupies the route within stopping range.
    fn blocked(&self, sim: &DriveSim, s: f64) -> bool {
        let line = &sim.scenario.map.route().centerline;
        let v = sim.state.speed;
        let reach = 0.5 * sim.vehicle.length + self.stop_margin + v * 0.5 + v * v / (2.0 * self.decel);
        let half_width = 0.5 * sim.vehicle.width + 0.2;
        let footprints: Vec<_> = sim.scenario.obstacles.iter().map(|o| o.inflated(half_width).footprint_at(sim.t)).collect();
        if footprints.is_empty() {
            return false;
        }
        let n = (reach / 0.25).ceil() as usize;
        (0..=n).any(|i| {
            let p = line.point_at(s + reach * i as f64 / n as f64);
            footprints.iter().any(|f| f.contains(p))
        })
    }

    /// Steering angle (rad) the follower commands from the current pose.
    pub fn steering_angle(&self, sim: &DriveSim) -> f64 {
        let line = &sim.scenario.map.route().centerline;
        let pos = sim.state.position();
        let s = line.project(pos).s;
        let target = s + self.lookahead;
        let len = line.length();
        // Past the end, continue along the final tangent.
        let goal = if target <= len {
            line.point_at(target)
        } else {
            line.point_at(len) + line.tangent_at(len) * (target - len)
        };
        let local: Vec2 = (goal - pos).rotate(-sim.state.heading);
        let l = local.norm().max(1e-6);
        let curvature = 2.0 * local.y / (l * l);
        (curvature * sim.vehicle.wheelbase).atan()
    }
}

impl DrivingPolicy for PurePursuit {
    fn modality(&self) -> Modality {
        Modality::Privileged
    }

    fn act(&mut self, _: Option<&Obs>, sim: &DriveSim) -> Result<Action> {
        let s = sim.scenario.map.route().centerline.project(sim.state.position()).s;
        let speed = if self.blocked(sim, s) { 0.0 } else { self.speed };
        let cfg = &sim.chain().cfg;
        let servo = self.steering_angle(sim).clamp(-cfg.map.max_servo_angle, cfg.map.max_servo_angle);
        Ok(cfg.map.action_for(speed / cfg.wheel_radius, servo))
    }
}
