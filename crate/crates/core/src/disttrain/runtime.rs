use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use super::message::{link, LinkRx, LinkTx, Message, NodeId, Outbox, Payload};
use super::reduce::{spawn_hub, ChannelReducer};
use super::replay_service::ReplayService;
use super::{DistReport, NodeStats, OptimizerRank, Topology};
use crate::error::{Error, Result};
use crate::sac::{ActingPolicy, EnvRunner, Environment, EpisodeRecord, GradReducer, Learner};

/// Update slots owed once `inserted` transitions have arrived; the same count the
/// single-process scheduler reaches after that many steps.
fn allowed_updates(inserted: u64, warmup: u64, utd: f64) -> u64 {
    if inserted < warmup.max(1) {
        0
    } else {
        (utd * (inserted - warmup.max(1) + 1) as f64).floor() as u64
    }
}

fn join<T>(h: std::thread::ScopedJoinHandle<'_, Result<T>>) -> Result<T> {
    h.join().unwrap_or_else(|_| Err(Error::InvalidInput("node thread panicked".into())))
}

fn protocol(node: NodeId, what: &str) -> Error {
    Error::InvalidInput(format!("{node}: unexpected {what}"))
}

/// Runs every node on its own thread.
///
/// Environment node `i` takes its share of `total_steps` (round-robin split). The
/// optimizers perform as many updates as the update-to-data ratio allows for the
/// transitions that have reached replay, and stop once replay is closed and the
/// allowance is used up. All replicas perform the same number of updates because the
/// allowance depends only on the shared insert count. The warmup must cover at least
/// one batch so that no update slot is ever skipped by some replicas only.
pub fn run_async<E: Environment>(
    topo: &Topology,
    make_env: impl Fn(usize) -> Result<E> + Sync,
    learner: Learner,
    total_steps: u64,
    seed: u64,
) -> Result<DistReport> {
    run_async_observed(topo, make_env, learner, total_steps, seed, &|_| Ok(()))
}

/// Rank 0's learner after each applied update; an error stops the run.
pub type UpdateObserver<'a> = &'a (dyn Fn(&Learner) -> Result<()> + Sync);

/// [`run_async`] with a callback on rank 0 after every update, e.g. for periodic
/// checkpoints.
pub fn run_async_observed<E: Environment>(
    topo: &Topology,
    make_env: impl Fn(usize) -> Result<E> + Sync,
    learner: Learner,
    total_steps: u64,
    seed: u64,
    observer: UpdateObserver<'_>,
) -> Result<DistReport> {
    topo.validate()?;
    let cfg = learner.cfg.clone();
    if cfg.warmup_steps < cfg.batch_size {
        return Err(Error::Config("asynchronous runs need warmup_steps ≥ batch_size".into()));
    }
    let (n, k, cap) = (topo.env_nodes, topo.optimizers, topo.channel_capacity);
    let service = ReplayService::new(cfg.buffer_capacity)?;
    let published = AtomicU64::new(0);
    let (reducers, hub) = spawn_hub(k)?;
    let (stats_tx, stats_rx) = link::<NodeStats>(cap, "stats");
    let (replay_tx, replay_rx) = link::<Message>(cap, "replay ingest");

    let mut to_actor = Vec::new();
    let mut actor_in = Vec::new();
    let mut to_env = Vec::new();
    let mut env_in = Vec::new();
    let mut snap_tx = Vec::new();
    let mut snap_rx = Vec::new();
    for _ in 0..n {
        let (a, b) = link(cap, "observations");
        to_actor.push(a);
        actor_in.push(b);
        let (a, b) = link(cap, "actions");
        to_env.push(a);
        env_in.push(b);
        let (a, b) = link(cap, "snapshots");
        snap_tx.push(a);
        snap_rx.push(b);
    }
    let warmup_per_actor = (cfg.warmup_steps as u64).div_ceil(n as u64);
    let start = Instant::now();

    let outcome = std::thread::scope(|s| {
        let mut env_handles = Vec::new();
        for (i, ((obs_tx, act_rx), rtx)) in to_actor.into_iter().zip(env_in).zip(std::iter::repeat(replay_tx.clone())).enumerate() {
            let steps = total_steps / n as u64 + u64::from((i as u64) < total_steps % n as u64);
            let (st, make_env) = (stats_tx.clone(), &make_env);
            env_handles.push(s.spawn(move || -> Result<(NodeStats, Vec<EpisodeRecord>)> {
                let runner = EnvRunner::new(make_env(i)?, seed, i)?;
                env_node(i, runner, steps, obs_tx, act_rx, rtx, st, topo.stats_interval, start)
            }));
        }
        drop(replay_tx);
        let mut actor_handles = Vec::new();
        for (i, ((obs_rx, act_tx), srx)) in actor_in.into_iter().zip(to_env).zip(snap_rx).enumerate() {
            let policy = ActingPolicy::new(seed, i, learner.spec.action_dim, warmup_per_actor);
            let (st, published) = (stats_tx.clone(), &published);
            actor_handles.push(s.spawn(move || actor_node(i, policy, obs_rx, act_tx, srx, published, st, topo.stats_interval, start)));
        }
        let service = &service;
        let replay_handle = s.spawn(move || {
            let r = replay_node(replay_rx, service, n);
            if let Err(e) = &r {
                service.abort(&e.to_string());
            }
            r
        });
        let mut opt_handles = Vec::new();
        let mut snap_tx = Some(snap_tx);
        for (rank, reducer) in reducers.into_iter().enumerate() {
            let opt = OptimizerRank::new(rank, learner.clone(), seed);
            let txs = if rank == 0 { snap_tx.take().unwrap_or_default() } else { Vec::new() };
            let (st, published) = (stats_tx.clone(), &published);
            opt_handles.push(s.spawn(move || {
                let r = optimizer_node(opt, service, reducer, txs, topo, published, st, start, observer);
                if let Err(e) = &r {
                    service.abort(&e.to_string());
                }
                r
            }));
        }
        drop(stats_tx);
        let mut stats = Vec::new();
        while let Ok(r) = stats_rx.recv() {
            stats.push(r);
        }
        let envs: Vec<Result<(NodeStats, Vec<EpisodeRecord>)>> = env_handles.into_iter().map(join).collect();
        let actors: Vec<Result<NodeStats>> = actor_handles.into_iter().map(join).collect();
        let replay: Result<NodeStats> = join(replay_handle);
        let opts: Vec<Result<(NodeStats, Learner)>> = opt_handles.into_iter().map(join).collect();
        (stats, envs, actors, replay, opts)
    });
    let hub_stats = hub.join().unwrap_or_else(|_| Err(Error::AllReduce("hub panicked".into())));

    let (mut stats, envs, actors, replay, opts) = outcome;
    // Report the root cause: a closed channel is usually a consequence.
    let mut errors: Vec<Error> = Vec::new();
    let mut episodes = Vec::new();
    let mut env_steps = 0;
    for r in envs {
        match r {
            Ok((s, eps)) => {
                env_steps += s.items;
                stats.push(s);
                episodes.extend(eps);
            }
            Err(e) => errors.push(e),
        }
    }
    for r in actors.into_iter().chain(std::iter::once(replay)) {
        match r {
            Ok(s) => stats.push(s),
            Err(e) => errors.push(e),
        }
    }
    let mut learners = Vec::new();
    for r in opts {
        match r {
            Ok((s, l)) => {
                stats.push(s);
                learners.push(l);
            }
            Err(e) => errors.push(e),
        }
    }
    let hub_stats = match hub_stats {
        Ok(h) => h,
        Err(e) => {
            errors.push(e);
            Default::default()
        }
    };
    if !errors.is_empty() {
        errors.sort_by_key(|e| matches!(e, Error::ChannelClosed(_)));
        return Err(errors.swap_remove(0));
    }
    if learners.iter().any(|l| l.digest() != learners[0].digest()) {
        return Err(Error::AllReduce("replicas finished with different parameters".into()));
    }
    episodes.sort_by_key(|e: &EpisodeRecord| (e.worker, e.episode));
    let learner = learners.swap_remove(0);
    Ok(DistReport { env_steps, updates: learner.updates, episodes, stats, learner, replica_checks: hub_stats.digest_rounds })
}

#[allow(clippy::too_many_arguments)]
fn env_node<E: Environment>(
    i: usize,
    mut runner: EnvRunner<E>,
    steps: u64,
    obs_tx: LinkTx<Message>,
    act_rx: LinkRx<Message>,
    replay_tx: LinkTx<Message>,
    stats_tx: LinkTx<NodeStats>,
    interval: u64,
    start: Instant,
) -> Result<(NodeStats, Vec<EpisodeRecord>)> {
    let id = NodeId::Env(i);
    let mut out = Outbox::new(id);
    let mut stats = NodeStats::new(id);
    let mut episodes = Vec::new();
    for _ in 0..steps {
        if obs_tx.send(out.stamp(Payload::Observation(runner.obs().clone()))).is_err() {
            break;
        }
        let action = match act_rx.recv() {
            Ok(Message { payload: Payload::Action(a), .. }) => a,
            Ok(Message { payload: Payload::Shutdown, .. }) | Err(_) => break,
            Ok(_) => return Err(protocol(id, "message from actor")),
        };
        let (t, rec) = runner.step(action)?;
        if replay_tx.send(out.stamp(Payload::Transitions(vec![t]))).is_err() {
            break;
        }
        episodes.extend(rec);
        stats.items += 1;
        if stats.items % interval == 0 {
            stats.queue_depth = replay_tx.depth();
            stats.finish(start.elapsed().as_secs_f64());
            let _ = stats_tx.send(stats.clone());
        }
    }
    let _ = obs_tx.send(out.stamp(Payload::Shutdown));
    let _ = replay_tx.send(out.stamp(Payload::Shutdown));
    stats.finish(start.elapsed().as_secs_f64());
    Ok((stats, episodes))
}

#[allow(clippy::too_many_arguments)]
fn actor_node(
    i: usize,
    mut policy: ActingPolicy,
    obs_rx: LinkRx<Message>,
    act_tx: LinkTx<Message>,
    snap_rx: LinkRx<Message>,
    published: &AtomicU64,
    stats_tx: LinkTx<NodeStats>,
    interval: u64,
    start: Instant,
) -> Result<NodeStats> {
    let id = NodeId::Actor(i);
    let mut out = Outbox::new(id);
    let mut stats = NodeStats::new(id);
    let take = |m: Message, policy: &mut ActingPolicy| -> Result<()> {
        match m.payload {
            Payload::Snapshot(s) => {
                if policy.version().map_or(true, |v| s.version >= v) {
                    policy.set_snapshot(s);
                }
                Ok(())
            }
            _ => Err(protocol(id, "message on the snapshot channel")),
        }
    };
    // Nothing to act with until the first broadcast.
    take(snap_rx.recv()?, &mut policy)?;
    loop {
        // Swap snapshots only between inferences.
        while let Ok(Some(m)) = snap_rx.try_recv() {
            take(m, &mut policy)?;
        }
        let obs = match obs_rx.recv() {
            Ok(Message { payload: Payload::Observation(o), .. }) => o,
            Ok(Message { payload: Payload::Shutdown, .. }) | Err(_) => break,
            Ok(_) => return Err(protocol(id, "message from environment")),
        };
        let a = policy.act(&obs)?;
        if let Some(v) = policy.version() {
            stats.record_staleness(published.load(Ordering::SeqCst), v);
        }
        if act_tx.send(out.stamp(Payload::Action(a))).is_err() {
            break;
        }
        stats.items += 1;
        if stats.items % interval == 0 {
            stats.queue_depth = obs_rx.depth();
            stats.finish(start.elapsed().as_secs_f64());
            let _ = stats_tx.send(stats.clone());
        }
    }
    stats.finish(start.elapsed().as_secs_f64());
    Ok(stats)
}

fn replay_node(rx: LinkRx<Message>, service: &ReplayService, envs: usize) -> Result<NodeStats> {
    let start = Instant::now();
    let mut stats = NodeStats::new(NodeId::Replay);
    let mut last: HashMap<NodeId, u64> = HashMap::new();
    let mut finished = 0;
    while finished < envs {
        let Ok(msg) = rx.recv() else { break };
        if let Some(prev) = last.insert(msg.sender, msg.seq) {
            if msg.seq <= prev {
                return Err(Error::InvalidInput(format!("{} sent sequence id {} after {prev}", msg.sender, msg.seq)));
            }
        }
        match msg.payload {
            Payload::Transitions(ts) => {
                stats.items += ts.len() as u64;
                service.insert(ts)?;
            }
            Payload::Shutdown => finished += 1,
            _ => return Err(protocol(NodeId::Replay, "message on the ingest channel")),
        }
    }
    service.close();
    stats.finish(start.elapsed().as_secs_f64());
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn optimizer_node(
    mut opt: OptimizerRank,
    service: &ReplayService,
    mut reducer: ChannelReducer,
    snap_tx: Vec<LinkTx<Message>>,
    topo: &Topology,
    published: &AtomicU64,
    stats_tx: LinkTx<NodeStats>,
    start: Instant,
    observer: UpdateObserver<'_>,
) -> Result<(NodeStats, Learner)> {
    let id = NodeId::Optimizer(opt.rank);
    let mut out = Outbox::new(id);
    let mut stats = NodeStats::new(id);
    let (warmup, utd) = (opt.learner.cfg.warmup_steps as u64, opt.learner.cfg.utd_ratio);
    let broadcast = |l: &Learner, out: &mut Outbox| {
        let snap = Arc::new(l.snapshot());
        for tx in &snap_tx {
            // An actor that has already shut down no longer needs snapshots.
            let _ = tx.send(out.stamp(Payload::Snapshot(snap.clone())));
        }
    };
    broadcast(&opt.learner, &mut out);
    loop {
        let done = opt.learner.updates;
        let (inserted, closed) = service.wait_for(|n| allowed_updates(n, warmup, utd) > done)?;
        if allowed_updates(inserted, warmup, utd) <= done {
            if closed {
                break;
            }
            continue;
        }
        let batch = service.with_buffer(|b| opt.learner.sample_batch(b, &mut opt.rng))??;
        let mut g = opt.learner.gradients(&batch)?;
        reducer.reduce(&mut g.critic)?;
        reducer.reduce(&mut g.actor)?;
        let mut t = [g.temperature];
        reducer.reduce(&mut t)?;
        g.temperature = t[0];
        opt.learner.apply(&g)?;
        reducer.check_digest(opt.learner.digest())?;
        stats.items += 1;
        if opt.rank == 0 {
            published.store(opt.learner.updates, Ordering::SeqCst);
            if opt.learner.updates % topo.broadcast_period == 0 {
                broadcast(&opt.learner, &mut out);
            }
            observer(&opt.learner)?;
        }
        if stats.items % topo.stats_interval == 0 {
            stats.finish(start.elapsed().as_secs_f64());
            let _ = stats_tx.send(stats.clone());
        }
    }
    reducer.leave();
    stats.finish(start.elapsed().as_secs_f64());
    Ok((stats, opt.learner))
}
