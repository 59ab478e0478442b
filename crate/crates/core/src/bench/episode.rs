use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EpisodeLog, Intervention, InterventionKind, LogHeader, StepRecord};
use crate::drive::{mix_seed, start_offset, DriveConfig, DriveSim, Modality, Visual};
use crate::error::{Error, Result};
use crate::sac::{ActionMode, Obs, PolicySnapshot};
use crate::simworld::{Action, Camera, Scenario, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub drive: DriveConfig,
    pub step_budget: usize,
    /// Consecutive stationary steps that force an intervention (one minute at 10 Hz).
    pub stationary_limit: u32,
    /// Resets land at least this far ahead of the intervention point, m.
    pub reset_ahead: f64,
    /// Clearance kept from obstacles at a reset pose, m.
    pub reset_margin: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { drive: DriveConfig::default(), step_budget: 5000, stationary_limit: 600, reset_ahead: 2.0, reset_margin: 0.5 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        self.drive.validate()?;
        if self.step_budget == 0 || self.stationary_limit == 0 || !(self.reset_ahead >= 0.0 && self.reset_margin >= 0.0) {
            return Err(Error::Config("bench budget, stationary limit and reset distances must be positive".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Anything that drives: learned agents see rendered observations, scripted drivers
/// read the simulator directly.
pub trait DrivingPolicy {
    fn modality(&self) -> Modality;

    /// Called at the start of every episode.
    fn reset(&mut self) {}

    /// May return non-finite components; the harness treats those as an intervention.
    fn act(&mut self, obs: Option<&Obs>, sim: &DriveSim) -> Result<Action>;
}

/// Emits the same action every step.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl DrivingPolicy for ConstantPolicy {
    fn modality(&self) -> Modality {
        Modality::Privileged
    }

    fn act(&mut self, _: Option<&Obs>, _: &DriveSim) -> Result<Action> {
        Ok(self.0)
    }
}

/// A trained actor acting on its mean action.
pub struct SacDriver {
    pub snapshot: Arc<PolicySnapshot>,
    pub modality: Modality,
    rng: ChaCha8Rng,
}

impl SacDriver {
    pub fn new(snapshot: Arc<PolicySnapshot>, modality: Modality) -> Self {
        Self { snapshot, modality, rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl DrivingPolicy for SacDriver {
    fn modality(&self) -> Modality {
        self.modality
    }

    fn act(&mut self, obs: Option<&Obs>, _: &DriveSim) -> Result<Action> {
        let obs = obs.ok_or_else(|| Error::InvalidInput("a learned driver needs observations".into()))?;
        let a = self.snapshot.act(obs, ActionMode::Deterministic, &mut self.rng)?;
        Ok(Action { steering: a[0], throttle: a[1] })
    }
}

/// Runs one evaluation episode from the start of the route.
///
/// Each step renders, asks the policy, and advances the control chain and vehicle. A
/// collision, `stationary_limit` steps without motion, or a non-finite action is an
/// intervention: the vehicle is moved to the nearest clear centerline pose at least
/// `reset_ahead` past its position and the episode continues. It ends at the route
/// end, when no reset pose is left, or after `step_budget` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    policy: &mut dyn DrivingPolicy,
    scenario: Arc<Scenario>,
    vehicle: VehicleParams,
    camera: Camera,
    visual: &Visual,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<EpisodeLog> {
    cfg.validate()?;
    let d = &cfg.drive;
    let mut sim = DriveSim::new(scenario.clone(), vehicle, camera, &d.control, Default::default(), d.dt)?;
    sim.start_at(start_offset(&vehicle), cfg.reset_margin)?;
    let header = LogHeader {
        map: scenario.map.name.clone(),
        seed,
        route_length: scenario.map.route_length(),
        max_servo_angle: d.control.map.max_servo_angle,
        dt: d.dt,
        vehicle,
        config_digest: cfg.digest(),
    };
    let mut log = EpisodeLog { header, steps: Vec::new(), interventions: Vec::new(), finished: false };
    let mut odometer = 0.0;
    policy.reset();
    for k in 0..cfg.step_budget {
        let obs = sim.observe(&d.grid, policy.modality(), visual, mix_seed(seed, k as u64));
        let action = policy.act(obs.as_ref(), &sim)?;
        let kind = if action.is_finite() {
            let out = sim.step(Action::new(action.steering, action.throttle), &d.reward)?;
            odometer += out.distance;
            log.steps.push(StepRecord {
                t: sim.t,
                x: out.next.x,
                y: out.next.y,
                heading: out.next.heading,
                v: out.next.speed,
                steering: out.control.servo_angle / d.control.map.max_servo_angle,
                throttle: out.control.vehicle_action.throttle,
                action: Some([action.steering, action.throttle]),
                reward: out.reward,
                distance: out.distance,
                events: out.events,
            });
            if out.events.collision {
                Some(InterventionKind::Collision)
            } else if out.events.stationary_steps >= cfg.stationary_limit {
                Some(InterventionKind::Stationary)
            } else {
                None
            }
        } else {
            // The vehicle holds still while the operator takes over.
            sim.t += d.dt;
            let s = sim.state;
            log.steps.push(StepRecord {
                t: sim.t,
                x: s.x,
                y: s.y,
                heading: s.heading,
                v: s.speed,
                steering: sim.chain().servo_angle() / d.control.map.max_servo_angle,
                throttle: 0.0,
                action: None,
                reward: 0.0,
                distance: 0.0,
                events: Default::default(),
            });
            Some(InterventionKind::NonFiniteAction)
        };
        if let Some(kind) = kind {
            log.interventions.push(Intervention { step: k, t: sim.t, x: sim.state.x, y: sim.state.y, kind, odometer });
            match sim.safe_reset_pose(cfg.reset_ahead, cfg.reset_margin) {
                Some(pose) => {
                    sim.teleport(pose);
                    policy.reset();
                }
                None => break,
            }
        }
        if sim.route_finished() {
            log.finished = true;
            break;
        }
    }
    Ok(log)
}
