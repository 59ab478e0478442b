//! Closed-loop driving: one vehicle on one scenario, commanded through the control
//! chain, observed through a rendering pipeline, and wrapped as a training environment.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ChainOutput, ControlChain, ControlConfig};
use crate::error::{Error, Result};
use crate::geometry::Obb;
use crate::reward::{total_reward, RewardConfig};
use crate::sac::{Environment, Obs, StepOutcome};
use crate::simworld::{
    augment, degrade, detect_events, measure_lane, randomize_episode, render_appearance, render_semantic, step, Action,
    Camera, GridSpec, LaneMeasure, Observation, Palette, RandomizationConfig, Scenario, StepEvents, TestRendering,
    VehicleParams, VehicleState, DEFAULT_DT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub dt: f64,
    pub grid: GridSpec,
    pub reward: RewardConfig,
    pub control: ControlConfig,
    pub randomization: RandomizationConfig,
    /// Training episodes are truncated after this many steps.
    pub train_horizon: u32,
    /// Training episodes are truncated after this many consecutive stationary steps.
    pub train_stationary_limit: u32,
    /// Training episodes start uniformly within this leading fraction of the route.
    pub start_spread: f64,
    /// Half-range of the heading perturbation at training starts, rad.
    pub start_heading_jitter: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            grid: GridSpec::default(),
            reward: RewardConfig::default(),
            control: ControlConfig::default(),
            randomization: RandomizationConfig::default(),
            train_horizon: 500,
            train_stationary_limit: 100,
            start_spread: 0.7,
            start_heading_jitter: 0.1,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.grid.rows == 0 || self.grid.cols == 0 || !(self.grid.cell > 0.0) {
            return Err(Error::Config("grid must be non-empty with positive cells".into()));
        }
        if self.train_horizon == 0 || self.train_stationary_limit == 0 {
            return Err(Error::Config("training horizon and stationary limit must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.start_spread) || !(self.start_heading_jitter >= 0.0) {
            return Err(Error::Config("start spread must lie in [0, 1] and heading jitter be non-negative".into()));
        }
        self.reward.validate()?;
        self.control.validate()?;
        self.randomization.validate()
    }
}

/// What a driving policy looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    /// Semantic label grid from the perception stage.
    Semantic,
    /// Appearance image, standing in for raw camera pixels.
    Appearance,
    /// Simulator state only; nothing is rendered.
    Privileged,
}

/// How observations are corrupted relative to the clean training render.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Visual {
    Clean,
    /// Labels are degraded as by an imperfect segmenter; appearance inputs are also
    /// re-rendered with `palette`.
    Gap { degrade: TestRendering, palette: Palette },
}

impl Visual {
    pub fn test_default() -> Self {
        Visual::Gap { degrade: TestRendering::default(), palette: Palette::realistic() }
    }
}

/// splitmix64 of two words; derives per-step render seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(b.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimStep {
    pub prev: VehicleState,
    pub next: VehicleState,
    pub events: StepEvents,
    pub measure: LaneMeasure,
    pub reward: f64,
    pub control: ChainOutput,
    /// Displacement of the reference point this step, m.
    pub distance: f64,
}

/// One vehicle on one scenario.
#[derive(Debug, Clone)]
pub struct DriveSim {
    pub scenario: Arc<Scenario>,
    pub vehicle: VehicleParams,
    /// Camera offset in the body frame.
    pub camera: Camera,
    pub state: VehicleState,
    /// Simulation time, s; drives scripted obstacles.
    pub t: f64,
    pub stationary: u32,
    pub dt: f64,
    chain: ControlChain,
}

impl DriveSim {
    pub fn new(
        scenario: Arc<Scenario>,
        vehicle: VehicleParams,
        camera: Camera,
        control: &ControlConfig,
        start: VehicleState,
        dt: f64,
    ) -> Result<Self> {
        vehicle.validate()?;
        Ok(Self { scenario, vehicle, camera, state: start, t: 0.0, stationary: 0, dt, chain: ControlChain::new(control.clone())? })
    }

    /// Places the vehicle at the first clear route pose at or after `s`; the
    /// reference point sits mid-vehicle, so the route start itself is off limits.
    pub fn start_at(&mut self, s: f64, margin: f64) -> Result<()> {
        let pose = self.clear_pose_from(s, margin).ok_or_else(|| Error::Map {
            map: self.scenario.map.name.clone(),
            msg: format!("no clear start pose past {s:.1} m"),
        })?;
        self.teleport(pose);
        Ok(())
    }

    pub fn chain(&self) -> &ControlChain {
        &self.chain
    }

    pub fn obstacle_footprints(&self) -> Vec<Obb> {
        self.scenario.obstacles.iter().map(|o| o.footprint_at(self.t)).collect()
    }

    pub fn step(&mut self, action: Action, reward: &RewardConfig) -> Result<SimStep> {
        let control = self.chain.step(action, self.state.speed, &self.vehicle, self.dt)?;
        let prev = self.state;
        let next = step(&prev, &control.vehicle_action, &self.vehicle, self.dt)?;
        let map = &self.scenario.map;
        let events = detect_events(&prev, &next, &self.vehicle, map, &self.scenario.obstacles, self.t, self.dt, self.stationary);
        let measure = measure_lane(&next, map);
        let r = total_reward(next.speed.min(reward.v_max), measure.d, measure.alpha, &events, reward)?;
        self.state = next;
        self.t += self.dt;
        self.stationary = events.stationary_steps;
        Ok(SimStep { prev, next, events, measure, reward: r, control, distance: prev.position().dist(next.position()) })
    }

    /// Moves the vehicle without driving there; the controllers restart from rest.
    pub fn teleport(&mut self, state: VehicleState) {
        self.state = state;
        self.stationary = 0;
        self.chain.reset();
    }

    /// Within one lane width of the final route vertex.
    pub fn route_finished(&self) -> bool {
        let route = self.scenario.map.route();
        let end = *route.centerline.points().last().expect("routes have vertices");
        self.state.position().dist(end) <= route.width
    }

    pub fn render(&self, grid: &GridSpec) -> Observation {
        let cam = Camera::mounted(&self.state, &self.camera);
        render_semantic(&self.scenario.map, &self.state, &self.obstacle_footprints(), &cam, grid, self.vehicle.v_max)
    }

    /// The observation for `modality` under `visual`; `None` for privileged policies.
    pub fn observe(&self, grid: &GridSpec, modality: Modality, visual: &Visual, seed: u64) -> Option<Obs> {
        if modality == Modality::Privileged {
            return None;
        }
        let clean = self.render(grid);
        let Visual::Gap { degrade: d, palette } = visual else {
            return Some(Obs::from_observation(&clean));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = degrade(clean.labels().expect("semantic render"), d, &mut rng);
        Some(match modality {
            Modality::Semantic => Obs::Labels {
                packed: labels.pack(),
                rows: labels.rows as u16,
                cols: labels.cols as u16,
                speed: clean.speed,
            },
            _ => {
                let px = render_appearance(&labels, palette, &mut rng);
                Obs::Pixels { rows: px.rows as u16, cols: px.cols as u16, data: px.data, speed: clean.speed }
            }
        })
    }

    /// Nearest pose on the route centerline at least `ahead` metres past the vehicle
    /// whose footprint is on the road and clear of obstacles by `margin`.
    pub fn safe_reset_pose(&self, ahead: f64, margin: f64) -> Option<VehicleState> {
        let s = self.scenario.map.route().centerline.project(self.state.position()).s + ahead;
        self.clear_pose_from(s, margin)
    }

    /// First pose at or after arc length `s` on the route centerline, at rest, whose
    /// footprint is on the road and clear of obstacles by `margin`.
    pub fn clear_pose_from(&self, mut s: f64, margin: f64) -> Option<VehicleState> {
        let map = &self.scenario.map;
        let line = &map.route().centerline;
        let blocked: Vec<Obb> = self.scenario.obstacles.iter().map(|o| o.inflated(margin).footprint_at(self.t)).collect();
        while s <= line.length() {
            let pose = map.route_pose(s, 0.0);
            let fp = pose.footprint(&self.vehicle);
            if fp.corners().iter().all(|c| map.on_road(*c)) && !blocked.iter().any(|b| b.overlaps(&fp)) {
                return Some(pose);
            }
            s += 0.5;
        }
        None
    }
}

/// Obstacle clearance at episode starts, m.
pub const START_MARGIN: f64 = 0.5;

/// Smallest route arc length at which the whole vehicle is past the route start.
pub fn start_offset(vehicle: &VehicleParams) -> f64 {
    0.5 * vehicle.length + 0.5
}

/// The randomized driving task used for training.
///
/// Each reset draws map, vehicle dynamics and camera mounting from the episode seed,
/// starts on the route centerline at rest, and renders clean semantics with
/// observation augmentation. Collisions are terminal; running past the horizon,
/// standing still too long or reaching the route end truncates.
pub struct DriveEnv {
    pub cfg: DriveConfig,
    scenarios: Arc<Vec<Arc<Scenario>>>,
    sim: Option<DriveSim>,
    fixed_seed: Option<u64>,
    seed: u64,
    steps: u32,
}

impl DriveEnv {
    pub fn new(cfg: DriveConfig, scenarios: Arc<Vec<Arc<Scenario>>>) -> Result<Self> {
        cfg.validate()?;
        if scenarios.is_empty() {
            return Err(Error::Config("no training scenarios".into()));
        }
        Ok(Self { cfg, scenarios, sim: None, fixed_seed: None, seed: 0, steps: 0 })
    }

    pub fn sim(&self) -> Option<&DriveSim> {
        self.sim.as_ref()
    }

    fn observe(&self) -> Obs {
        let sim = self.sim.as_ref().expect("reset before observe");
        let raw = sim.render(&self.cfg.grid);
        Obs::from_observation(&augment(&raw, &self.cfg.randomization.augment, mix_seed(self.seed, self.steps as u64)))
    }
}

impl Environment for DriveEnv {
    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Result<Obs> {
        let r = &self.cfg.randomization;
        let draw_seed = if r.reseed_each_episode { seed } else { *self.fixed_seed.get_or_insert(seed) };
        let draw = randomize_episode(r, self.scenarios.len(), draw_seed)?;
        let scenario = self.scenarios[draw.map_index].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
        let s = rng.gen::<f64>() * self.cfg.start_spread * scenario.map.route_length();
        let mut sim = DriveSim::new(scenario, draw.vehicle, draw.camera, &self.cfg.control, VehicleState::default(), self.cfg.dt)?;
        sim.start_at(s.max(start_offset(&draw.vehicle)), START_MARGIN)?;
        let j = self.cfg.start_heading_jitter;
        if j > 0.0 {
            let p = sim.state;
            sim.state = VehicleState::new(p.x, p.y, p.heading + rng.gen_range(-j..=j), 0.0);
        }
        self.sim = Some(sim);
        self.seed = seed;
        self.steps = 0;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != 2 {
            return Err(Error::Shape(format!("driving actions have two components, got {}", action.len())));
        }
        let reward_cfg = self.cfg.reward;
        let sim = self.sim.as_mut().ok_or_else(|| Error::InvalidInput("step before reset".into()))?;
        let out = sim.step(Action::from_slice(action), &reward_cfg)?;
        let finished = sim.route_finished();
        self.steps += 1;
        let terminal = out.events.collision;
        let truncated = !terminal
            && (self.steps >= self.cfg.train_horizon
                || out.events.stationary_steps >= self.cfg.train_stationary_limit
                || finished);
        Ok(StepOutcome { obs: self.observe(), reward: out.reward, terminal, truncated })
    }
}

/// Splits scenarios by their declared split, keeping order.
pub fn split_scenarios(all: Vec<Scenario>) -> (Vec<Arc<Scenario>>, Vec<Arc<Scenario>>) {
    let (train, test): (Vec<_>, Vec<_>) =
        all.into_iter().map(Arc::new).partition(|s| s.map.split == crate::simworld::MapSplit::Train);
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::builtin_scenarios;

    fn straight() -> Arc<Scenario> {
        Arc::new(builtin_scenarios().into_iter().find(|s| s.map.name == "straight_two_lane").unwrap())
    }

    #[test]
    fn constant_throttle_drives_forward_on_the_lane() {
        let sc = straight();
        let start = sc.map.route_pose(5.0, 0.0);
        let mut sim = DriveSim::new(sc, VehicleParams::default(), Camera::default(), &ControlConfig::default(), start, 0.1).unwrap();
        let y0 = start.y;
        let mut dist = 0.0;
        for _ in 0..100 {
            let s = sim.step(Action::new(0.0, 0.0), &RewardConfig::default()).unwrap();
            assert!(!s.events.collision);
            dist += s.distance;
        }
        assert!(sim.state.speed > 4.0 && dist > 30.0, "{:?}", sim.state);
        assert!((sim.state.y - y0).abs() < 1e-9);
    }

    #[test]
    fn safe_reset_is_ahead_on_centerline() {
        let sc = straight();
        let start = sc.map.route_pose(50.0, 3.0);
        let sim = DriveSim::new(sc.clone(), VehicleParams::default(), Camera::default(), &ControlConfig::default(), start, 0.1).unwrap();
        let p = sim.safe_reset_pose(2.0, 0.5).unwrap();
        let s = sc.map.route().centerline.project(p.position()).s;
        assert!((s - 52.0).abs() < 1e-9 && p.speed == 0.0);
    }

    #[test]
    fn gap_rendering_changes_only_what_it_should() {
        let sc = straight();
        let start = sc.map.route_pose(20.0, 0.0);
        let sim = DriveSim::new(sc, VehicleParams::default(), Camera::default(), &ControlConfig::default(), start, 0.1).unwrap();
        let g = GridSpec::default();
        assert!(sim.observe(&g, Modality::Privileged, &Visual::Clean, 0).is_none());
        let clean = sim.observe(&g, Modality::Semantic, &Visual::Clean, 0).unwrap();
        assert_eq!(clean, sim.observe(&g, Modality::Appearance, &Visual::Clean, 0).unwrap());
        let noisy = sim.observe(&g, Modality::Semantic, &Visual::test_default(), 3).unwrap();
        assert_ne!(clean, noisy);
        assert_eq!(noisy, sim.observe(&g, Modality::Semantic, &Visual::test_default(), 3).unwrap());
        assert!(matches!(sim.observe(&g, Modality::Appearance, &Visual::test_default(), 3), Some(Obs::Pixels { .. })));
    }

    #[test]
    fn env_episodes_are_seed_determined() {
        let (train, _) = split_scenarios(builtin_scenarios());
        let mut a = DriveEnv::new(DriveConfig::default(), Arc::new(train.clone())).unwrap();
        let mut b = DriveEnv::new(DriveConfig::default(), Arc::new(train)).unwrap();
        assert_eq!(a.reset(11).unwrap(), b.reset(11).unwrap());
        for k in 0..30 {
            let act = [((k as f64) * 0.3).sin(), 0.2];
            assert_eq!(a.step(&act).unwrap(), b.step(&act).unwrap());
        }
        assert_ne!(a.reset(12).unwrap(), b.reset(11).unwrap());
    }

    #[test]
    fn leaving_the_road_is_terminal() {
        let (train, _) = split_scenarios(builtin_scenarios());
        let mut env = DriveEnv::new(DriveConfig { start_heading_jitter: 0.0, ..DriveConfig::default() }, Arc::new(train)).unwrap();
        env.reset(5).unwrap();
        let mut ended = None;
        for _ in 0..400 {
            let o = env.step(&[1.0, 0.5]).unwrap();
            if o.ended() {
                ended = Some(o);
                break;
            }
        }
        let o = ended.expect("full lock leaves the road");
        assert!(o.terminal && !o.truncated);
    }
}
