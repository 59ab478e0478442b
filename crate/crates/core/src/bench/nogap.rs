use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, BenchConfig, DrivingPolicy};
use super::{EpisodeLog, MetricsReport};
use crate::drive::{mix_seed, Visual};
use crate::error::{Error, Result};
use crate::simworld::{Camera, Palette, Scenario, TestRendering, VehicleParams};

/// Which of the three train/test differences are active in the test condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub visual: bool,
    pub dynamics: bool,
    pub scenario: bool,
    pub test_rendering: TestRendering,
    pub test_palette: Palette,
    /// Relative half-range of the per-episode perturbation of vehicle parameters.
    pub dynamics_jitter: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            visual: true,
            dynamics: true,
            scenario: true,
            test_rendering: TestRendering::default(),
            test_palette: Palette::realistic(),
            dynamics_jitter: 0.15,
        }
    }
}

impl GapConfig {
    pub fn none() -> Self {
        Self { visual: false, dynamics: false, scenario: false, ..Self::default() }
    }

    pub fn visual_condition(&self) -> Visual {
        if self.visual {
            Visual::Gap { degrade: self.test_rendering, palette: self.test_palette }
        } else {
            Visual::Clean
        }
    }
}

/// Vehicle for a test episode: a member of the standard set with wheelbase, drag,
/// acceleration gain and steering limit each scaled by an independent factor in
/// `1 ± jitter`.
pub fn test_vehicle(seed: u64, jitter: f64) -> VehicleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = VehicleParams::standard_set();
    let base = set[rng.gen_range(0..set.len())];
    let mut f = || if jitter > 0.0 { 1.0 + rng.gen_range(-jitter..=jitter) } else { 1.0 };
    VehicleParams {
        wheelbase: base.wheelbase * f(),
        drag: base.drag * f(),
        accel_gain: base.accel_gain * f(),
        max_steer: base.max_steer * f(),
        ..base
    }
}

/// Everything needed to replay one evaluation episode.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub scenario: Arc<Scenario>,
    pub vehicle: VehicleParams,
    pub visual: Visual,
    pub seed: u64,
}

pub type PolicyFactory<'a> = &'a (dyn Fn() -> Result<Box<dyn DrivingPolicy>> + Sync);

/// Runs every episode, fanning out over the available cores. Logs come back in the
/// order of `specs` whatever the thread count.
pub fn evaluate(factory: PolicyFactory<'_>, specs: &[EpisodeSpec], cfg: &BenchConfig) -> Result<Vec<EpisodeLog>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(specs.len()).max(1);
    let run = |spec: &EpisodeSpec| -> Result<EpisodeLog> {
        let mut p = factory()?;
        run_episode(p.as_mut(), spec.scenario.clone(), spec.vehicle, Camera::default(), &spec.visual, cfg, spec.seed)
    };
    if threads == 1 {
        return specs.iter().map(run).collect();
    }
    let mut slots: Vec<Option<Result<EpisodeLog>>> = (0..specs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(specs.len().div_ceil(threads)).enumerate().collect();
        let size = specs.len().div_ceil(threads);
        for (c, chunk) in chunks {
            let run = &run;
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(&specs[c * size + i]));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot is filled")).collect()
}

/// Train and test scenario pools with the episode budget per condition.
#[derive(Debug, Clone)]
pub struct EvalSuite {
    pub train: Vec<Arc<Scenario>>,
    pub test: Vec<Arc<Scenario>>,
    pub episodes: usize,
    pub seed: u64,
    pub gap: GapConfig,
    pub bench: BenchConfig,
}

impl EvalSuite {
    /// Episodes of one condition; maps are visited in turn.
    pub fn specs(&self, gap: &GapConfig) -> Result<Vec<EpisodeSpec>> {
        let pool = if gap.scenario { &self.test } else { &self.train };
        if pool.is_empty() {
            return Err(Error::Config("evaluation scenario pool is empty".into()));
        }
        Ok((0..self.episodes)
            .map(|i| {
                let seed = mix_seed(self.seed, i as u64);
                EpisodeSpec {
                    scenario: pool[i % pool.len()].clone(),
                    vehicle: if gap.dynamics { test_vehicle(seed, gap.dynamics_jitter) } else { VehicleParams::default() },
                    visual: gap.visual_condition(),
                    seed,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoGapReport {
    pub train: MetricsReport,
    pub test: MetricsReport,
    /// Test MPI over train MPI, using lower bounds where no intervention happened.
    pub mpi_ratio: f64,
}

/// Evaluates a policy in the training condition and in the configured gap condition.
pub fn nogap_eval(factory: PolicyFactory<'_>, suite: &EvalSuite) -> Result<(NoGapReport, Vec<EpisodeLog>, Vec<EpisodeLog>)> {
    let train_logs = evaluate(factory, &suite.specs(&GapConfig::none())?, &suite.bench)?;
    let test_logs = evaluate(factory, &suite.specs(&suite.gap)?, &suite.bench)?;
    let train = MetricsReport::from_logs(&train_logs)?;
    let test = MetricsReport::from_logs(&test_logs)?;
    let denom = train.mpi.lower_bound();
    let mpi_ratio = if denom > 0.0 { test.mpi.lower_bound() / denom } else { 0.0 };
    Ok((NoGapReport { train, test, mpi_ratio }, train_logs, test_logs))
}
