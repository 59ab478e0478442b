//! Single-process training loop and the acting loop shared with the distributed
//! runtime.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::UtdScheduler;
use super::env::Environment;
use super::learner::{ActionMode, Learner, PolicySnapshot, UpdateStats};
use super::obs::Obs;
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};

const ACT_STREAM: u64 = 1 << 32;
const LEARN_STREAM: u64 = 2 << 32;

/// Random stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Acting randomness of environment worker `worker`.
pub fn act_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    stream_rng(seed, ACT_STREAM + worker as u64)
}

/// Minibatch randomness of optimizer `rank`.
pub fn learn_rng(seed: u64, rank: usize) -> ChaCha8Rng {
    stream_rng(seed, LEARN_STREAM + rank as u64)
}

/// Seed of episode `episode` on worker `worker`; a splitmix64 finalizer keeps nearby
/// inputs far apart.
pub fn episode_seed(seed: u64, worker: usize, episode: u64) -> u64 {
    let mut z = seed ^ (worker as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ episode.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub worker: usize,
    pub episode: u64,
    /// Environment steps taken by this worker when the episode ended.
    pub env_steps: u64,
    pub episode_return: f64,
    pub length: usize,
}

/// Environment-side state of one worker: the task, the current observation and the
/// episode bookkeeping.
pub struct EnvRunner<E: Environment> {
    pub env: E,
    pub worker: usize,
    seed: u64,
    obs: Obs,
    episode: u64,
    episode_return: f64,
    episode_len: usize,
    pub steps: u64,
}

impl<E: Environment> EnvRunner<E> {
    pub fn new(mut env: E, seed: u64, worker: usize) -> Result<Self> {
        let obs = env.reset(episode_seed(seed, worker, 0))?;
        Ok(Self { env, worker, seed, obs, episode: 0, episode_return: 0.0, episode_len: 0, steps: 0 })
    }

    pub fn obs(&self) -> &Obs {
        &self.obs
    }

    /// Steps with `action`; on episode end the next episode starts immediately.
    pub fn step(&mut self, action: Vec<f64>) -> Result<(Transition, Option<EpisodeRecord>)> {
        let out = self.env.step(&action)?;
        self.steps += 1;
        self.episode_return += out.reward;
        self.episode_len += 1;
        let ended = out.ended();
        let t = Transition {
            obs: std::mem::replace(&mut self.obs, out.obs.clone()),
            action,
            reward: out.reward,
            next_obs: out.obs,
            done: out.terminal,
        };
        let mut record = None;
        if ended {
            record = Some(EpisodeRecord {
                worker: self.worker,
                episode: self.episode,
                env_steps: self.steps,
                episode_return: self.episode_return,
                length: self.episode_len,
            });
            self.episode += 1;
            self.episode_return = 0.0;
            self.episode_len = 0;
            self.obs = self.env.reset(episode_seed(self.seed, self.worker, self.episode))?;
        }
        Ok((t, record))
    }
}

/// Actor-side state of one worker: uniform random actions for the first `warmup`
/// queries, then stochastic actions from the most recent snapshot.
pub struct ActingPolicy {
    rng: ChaCha8Rng,
    action_dim: usize,
    warmup: u64,
    pub acted: u64,
    snapshot: Option<Arc<PolicySnapshot>>,
}

impl ActingPolicy {
    pub fn new(seed: u64, worker: usize, action_dim: usize, warmup: u64) -> Self {
        Self { rng: act_rng(seed, worker), action_dim, warmup, acted: 0, snapshot: None }
    }

    pub fn set_snapshot(&mut self, s: Arc<PolicySnapshot>) {
        self.snapshot = Some(s);
    }

    pub fn version(&self) -> Option<u64> {
        self.snapshot.as_ref().map(|s| s.version)
    }

    pub fn act(&mut self, obs: &Obs) -> Result<Vec<f64>> {
        let a = if self.acted < self.warmup {
            (0..self.action_dim).map(|_| self.rng.gen_range(-1.0..=1.0)).collect()
        } else {
            let s = self.snapshot.as_ref().ok_or_else(|| Error::InvalidInput("no policy snapshot yet".into()))?;
            s.act(obs, ActionMode::Stochastic, &mut self.rng)?
        };
        self.acted += 1;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub last_stats: Option<UpdateStats>,
}

/// Observation points of a training run. The lockstep distributed driver calls them
/// at the same moments as the single-process trainer.
pub trait TrainHooks {
    fn on_episode(&mut self, _r: &EpisodeRecord) {}
    /// After every applied update, with every replica (one for a single process).
    fn on_update(&mut self, _replicas: &[Learner], _stats: &UpdateStats) {}
    fn on_action(&mut self, _worker: usize, _action: &[f64]) {}
    fn on_transition(&mut self, _worker: usize, _t: &Transition) {}
}

impl TrainHooks for () {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub total_steps: u64,
    pub seed: u64,
    /// Updates between refreshes of the acting policy.
    pub broadcast_period: u64,
}

impl TrainOptions {
    pub fn new(total_steps: u64, seed: u64) -> Self {
        Self { total_steps, seed, broadcast_period: DEFAULT_BROADCAST_PERIOD }
    }
}

pub const DEFAULT_BROADCAST_PERIOD: u64 = 50;

/// Runs SAC on one environment.
///
/// The first `warmup_steps` actions are uniform random; from the last warmup step on
/// the scheduler owes `utd_ratio` updates per step, and the acting policy is refreshed
/// every `broadcast_period` updates.
pub fn train<E: Environment>(
    env: E,
    learner: &mut Learner,
    opts: TrainOptions,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainSummary> {
    if opts.broadcast_period == 0 {
        return Err(Error::Config("broadcast period must be at least one update".into()));
    }
    let TrainOptions { total_steps, seed, broadcast_period } = opts;
    let cfg = learner.cfg.clone();
    let mut runner = EnvRunner::new(env, seed, 0)?;
    let mut actor = ActingPolicy::new(seed, 0, learner.spec.action_dim, cfg.warmup_steps as u64);
    actor.set_snapshot(Arc::new(learner.snapshot()));
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut sched = UtdScheduler::new(cfg.utd_ratio);
    let mut rng = learn_rng(seed, 0);
    let mut episodes = Vec::new();
    let mut last_stats = None;
    for step in 0..total_steps {
        let a = actor.act(runner.obs())?;
        hooks.on_action(0, &a);
        let (t, rec) = runner.step(a)?;
        hooks.on_transition(0, &t);
        buffer.insert(t)?;
        if let Some(r) = rec {
            hooks.on_episode(&r);
            episodes.push(r);
        }
        if step + 1 < cfg.warmup_steps as u64 {
            continue;
        }
        for _ in 0..sched.on_env_step() {
            if let Some(s) = learner.train_step(&buffer, &mut rng)? {
                hooks.on_update(std::slice::from_ref(learner), &s);
                last_stats = Some(s);
                if learner.updates % broadcast_period == 0 {
                    actor.set_snapshot(Arc::new(learner.snapshot()));
                }
            }
        }
    }
    Ok(TrainSummary { env_steps: runner.steps, updates: learner.updates, episodes, last_stats })
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(out: &mut impl Write, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
