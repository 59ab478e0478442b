use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use super::message::{Message, NodeId, Outbox, Payload};
use super::{reduce_gradients, DistReport, NodeStats, OptimizerRank, RunHooks, Topology};
use crate::error::{Error, Result};
use crate::sac::{ActingPolicy, EnvRunner, Environment, Learner, Obs, ReplayBuffer, Transition, UtdScheduler};

/// Replaces the learned policy of every actor node; used to check the message flow
/// against plain rollouts.
pub type ScriptedActor<'a> = &'a dyn Fn(usize, &Obs) -> Vec<f64>;

/// Runs the topology on one thread in a fixed order.
///
/// Environment nodes take turns round-robin, one step each. Every step is a full
/// message exchange (observation to the actor, action back, transition to replay),
/// after which the update scheduler runs exactly as in the single-process trainer: each
/// owed update has every optimizer sample its own batch, the gradients are averaged
/// over the fixed tree, every replica applies the mean, and the replica digests are
/// compared. Rank 0 broadcasts its policy to all actors every `broadcast_period`
/// updates, and once before the first step.
#[allow(clippy::too_many_arguments)]
pub fn run_lockstep<E: Environment>(
    topo: &Topology,
    mut make_env: impl FnMut(usize) -> Result<E>,
    learner: Learner,
    total_steps: u64,
    seed: u64,
    scripted: Option<ScriptedActor<'_>>,
    hooks: &mut dyn RunHooks,
) -> Result<DistReport> {
    topo.validate()?;
    let start = Instant::now();
    let n = topo.env_nodes;
    let cfg = learner.cfg.clone();
    let warmup_per_actor = (cfg.warmup_steps as u64).div_ceil(n as u64);
    let mut envs = Vec::with_capacity(n);
    let mut actors = Vec::with_capacity(n);
    for i in 0..n {
        envs.push((EnvRunner::new(make_env(i)?, seed, i)?, Outbox::new(NodeId::Env(i)), NodeStats::new(NodeId::Env(i))));
        actors.push((
            ActingPolicy::new(seed, i, learner.spec.action_dim, warmup_per_actor),
            Outbox::new(NodeId::Actor(i)),
            NodeStats::new(NodeId::Actor(i)),
        ));
    }
    let mut ranks: Vec<OptimizerRank> = (0..topo.optimizers).map(|k| OptimizerRank::new(k, learner.clone(), seed)).collect();
    let mut opt_outbox = Outbox::new(NodeId::Optimizer(0));
    let mut replay = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut last_seq: HashMap<NodeId, u64> = HashMap::new();
    let mut sched = UtdScheduler::new(cfg.utd_ratio);
    let mut episodes = Vec::new();
    let mut stats_log = Vec::new();
    let mut replica_checks = 0;

    let broadcast = |ranks: &[OptimizerRank], outbox: &mut Outbox, actors: &mut Vec<(ActingPolicy, Outbox, NodeStats)>| {
        let snap = Arc::new(ranks[0].learner.snapshot());
        for (policy, _, _) in actors.iter_mut() {
            match outbox.stamp(Payload::Snapshot(snap.clone())).payload {
                Payload::Snapshot(s) => policy.set_snapshot(s),
                _ => unreachable!(),
            }
        }
    };
    broadcast(&ranks, &mut opt_outbox, &mut actors);

    for step in 0..total_steps {
        let i = (step % n as u64) as usize;
        let (runner, env_out, env_stats) = &mut envs[i];
        let (policy, act_out, act_stats) = &mut actors[i];

        let obs_msg = env_out.stamp(Payload::Observation(runner.obs().clone()));
        let action = match (&obs_msg.payload, scripted) {
            (Payload::Observation(o), Some(f)) => f(i, o),
            (Payload::Observation(o), None) => policy.act(o)?,
            _ => unreachable!(),
        };
        if let Some(v) = policy.version() {
            act_stats.record_staleness(ranks[0].learner.updates, v);
        }
        act_stats.items += 1;
        hooks.on_action(i, &action);
        let act_msg = act_out.stamp(Payload::Action(action));
        let Payload::Action(action) = act_msg.payload else { unreachable!() };

        let (t, rec) = runner.step(action)?;
        env_stats.items += 1;
        hooks.on_transition(i, &t);
        let msg = env_out.stamp(Payload::Transitions(vec![t]));
        ingest(&mut replay, &mut last_seq, msg)?;
        if let Some(r) = rec {
            hooks.on_episode(&r);
            episodes.push(r);
        }

        if step + 1 < cfg.warmup_steps as u64 {
            continue;
        }
        for _ in 0..sched.on_env_step() {
            if replay.len() < cfg.batch_size {
                continue;
            }
            let mut grads = ranks.iter_mut().map(|r| r.gradients(&replay)).collect::<Result<Vec<_>>>()?;
            reduce_gradients(&mut grads)?;
            for (r, g) in ranks.iter_mut().zip(&grads) {
                r.learner.apply(g)?;
            }
            let d0 = ranks[0].learner.digest();
            if ranks.iter().any(|r| r.learner.digest() != d0) {
                return Err(Error::AllReduce(format!("replicas diverged at update {}", ranks[0].learner.updates)));
            }
            replica_checks += 1;
            let learners: Vec<Learner> = ranks.iter().map(|r| r.learner.clone()).collect();
            hooks.on_update(&learners, &grads[0].stats);
            if ranks[0].learner.updates % topo.broadcast_period == 0 {
                broadcast(&ranks, &mut opt_outbox, &mut actors);
            }
        }
        if (step + 1) % topo.stats_interval == 0 {
            let elapsed = start.elapsed().as_secs_f64();
            for (_, _, s) in &envs {
                let mut s = s.clone();
                s.finish(elapsed);
                stats_log.push(s);
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    for (_, _, mut s) in envs {
        s.finish(elapsed);
        stats_log.push(s);
    }
    for (_, _, mut s) in actors {
        s.finish(elapsed);
        stats_log.push(s);
    }
    for r in &ranks {
        let mut s = NodeStats::new(NodeId::Optimizer(r.rank));
        s.items = r.learner.updates;
        s.finish(elapsed);
        stats_log.push(s);
    }
    let learner = ranks.swap_remove(0).learner;
    Ok(DistReport { env_steps: total_steps, updates: learner.updates, episodes, stats: stats_log, learner, replica_checks })
}

fn ingest(replay: &mut ReplayBuffer, last_seq: &mut HashMap<NodeId, u64>, msg: Message) -> Result<()> {
    if let Some(prev) = last_seq.insert(msg.sender, msg.seq) {
        if msg.seq <= prev {
            return Err(Error::InvalidInput(format!("{} sent sequence id {} after {prev}", msg.sender, msg.seq)));
        }
    }
    match msg.payload {
        Payload::Transitions(ts) => ts.into_iter().try_for_each(|t: Transition| replay.insert(t)),
        _ => Err(Error::InvalidInput("replay expects transition batches".into())),
    }
}
