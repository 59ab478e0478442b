//! Distributed off-policy training: environment nodes paired with actor nodes feed a
//! shared replay service, and optimizer replicas average their gradients with an
//! all-reduce before applying identical updates.
//!
//! Two drivers share the node logic. [`run_async`] runs every node on its own thread
//! with bounded channels. [`run_lockstep`] serializes the same topology into a fixed
//! schedule on one thread for bit-reproducible runs.

mod lockstep;
pub mod message;
pub mod reduce;
mod replay_service;
mod runtime;

pub use lockstep::run_lockstep;
pub use message::{link, LinkRx, LinkTx, Message, NodeId, Outbox, Payload};
pub use reduce::{all_reduce, spawn_hub, tree_sum, ChannelReducer, HubStats};
pub use replay_service::ReplayService;
pub use runtime::{run_async, run_async_observed, UpdateObserver};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sac::trainer::learn_rng;
pub use crate::sac::TrainHooks as RunHooks;
use crate::sac::{Batch, EpisodeRecord, Learner, ReplayBuffer, UpdateGradients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    /// Environment/actor pairs.
    pub env_nodes: usize,
    pub optimizers: usize,
    pub channel_capacity: usize,
    /// Updates between policy broadcasts.
    pub broadcast_period: u64,
    pub lockstep: bool,
    /// Items a node processes between two stats records.
    pub stats_interval: u64,
}

impl Default for Topology {
    fn default() -> Self {
        Self { env_nodes: 1, optimizers: 1, channel_capacity: 16, broadcast_period: 50, lockstep: false, stats_interval: 1000 }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.env_nodes == 0 || self.optimizers == 0 {
            return Err(Error::Config("need at least one environment node and one optimizer".into()));
        }
        if self.channel_capacity == 0 || self.broadcast_period == 0 || self.stats_interval == 0 {
            return Err(Error::Config("capacities, broadcast period and stats interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub node: NodeId,
    /// Environment steps, actions, transitions or updates, depending on the node.
    pub items: u64,
    pub elapsed_s: f64,
    pub throughput: f64,
    /// Updates applied by the learner minus the version of the snapshot in use.
    pub staleness: u64,
    pub max_staleness: u64,
    pub queue_depth: usize,
    pub snapshot_version: Option<u64>,
}

impl NodeStats {
    pub fn new(node: NodeId) -> Self {
        Self { node, items: 0, elapsed_s: 0.0, throughput: 0.0, staleness: 0, max_staleness: 0, queue_depth: 0, snapshot_version: None }
    }

    pub(crate) fn record_staleness(&mut self, learner_updates: u64, version: u64) {
        self.staleness = learner_updates.saturating_sub(version);
        self.max_staleness = self.max_staleness.max(self.staleness);
        self.snapshot_version = Some(version);
    }

    pub(crate) fn finish(&mut self, elapsed_s: f64) {
        self.elapsed_s = elapsed_s;
        self.throughput = if elapsed_s > 0.0 { self.items as f64 / elapsed_s } else { 0.0 };
    }
}

/// Outcome of a distributed run.
#[derive(Debug, Clone)]
pub struct DistReport {
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// Periodic and final per-node records, in emission order.
    pub stats: Vec<NodeStats>,
    /// Rank 0's learner at the end of the run.
    pub learner: Learner,
    /// Digest comparisons that confirmed identical replicas.
    pub replica_checks: u64,
}

/// One optimizer replica with its own minibatch stream.
pub struct OptimizerRank {
    pub rank: usize,
    pub learner: Learner,
    pub(crate) rng: ChaCha8Rng,
}

impl OptimizerRank {
    pub fn new(rank: usize, learner: Learner, seed: u64) -> Self {
        Self { rank, learner, rng: learn_rng(seed, rank) }
    }

    /// Draws this rank's next minibatch.
    pub fn sample(&mut self, buffer: &ReplayBuffer) -> Result<Batch> {
        self.learner.sample_batch(buffer, &mut self.rng)
    }

    /// Samples a batch and computes unreduced gradients.
    pub fn gradients(&mut self, buffer: &ReplayBuffer) -> Result<UpdateGradients> {
        let batch = self.sample(buffer)?;
        self.learner.gradients(&batch)
    }
}

/// Averages each gradient group across ranks in place.
pub fn reduce_gradients(grads: &mut [UpdateGradients]) -> Result<()> {
    let critic = all_reduce(&grads.iter().map(|g| g.critic.as_slice()).collect::<Vec<_>>())?;
    let actor = all_reduce(&grads.iter().map(|g| g.actor.as_slice()).collect::<Vec<_>>())?;
    let temp = all_reduce(&grads.iter().map(|g| std::slice::from_ref(&g.temperature)).collect::<Vec<_>>())?[0];
    for g in grads.iter_mut() {
        g.critic.clone_from(&critic);
        g.actor.clone_from(&actor);
        g.temperature = temp;
    }
    Ok(())
}
