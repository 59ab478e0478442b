//! The distributed topology on the point mass: the lockstep schedule against the
//! single-process trainer, then the threaded runtime with per-node throughput.
//!
//! ```text
//! cargo run --release --example distributed_training -- [env nodes] [optimizers]
//! ```

use moddrive::approx::NetSpec;
use moddrive::disttrain::{run_async, run_lockstep, Topology};
use moddrive::sac::{train, InputEncoding, Learner, PointMass, SacConfig, TrainOptions};

fn learner(seed: u64) -> moddrive::Result<Learner> {
    let cfg = SacConfig { target_entropy: -1.0, batch_size: 64, warmup_steps: 256, ..SacConfig::default() };
    Learner::new(NetSpec::mlp(2, 1, vec![32, 32]), InputEncoding::Vector, cfg, seed)
}

fn main() -> moddrive::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let n = args.next().unwrap_or(2);
    let k = args.next().unwrap_or(2);
    let steps = 4_000;

    let mut single = learner(5)?;
    train(PointMass::new(), &mut single, TrainOptions::new(steps, 5), &mut ())?;
    let one = Topology { lockstep: true, ..Topology::default() };
    let r = run_lockstep(&one, |_| Ok(PointMass::new()), learner(5)?, steps, 5, None, &mut ())?;
    println!("lockstep N=1 K=1 matches the single-process trainer bit for bit: {}", r.learner.digest() == single.digest());

    let topo = Topology { env_nodes: n, optimizers: k, ..Topology::default() };
    let t0 = std::time::Instant::now();
    let r = run_async(&topo, |_| Ok(PointMass::new()), learner(5)?, steps, 5)?;
    println!(
        "threaded N={n} K={k}: {} env steps, {} updates, {} identical-replica checks in {:.2?}",
        r.env_steps,
        r.updates,
        r.replica_checks,
        t0.elapsed()
    );
    for s in r.stats.iter().filter(|s| s.elapsed_s > 0.0) {
        println!("  {:?}: {} items, {:.0}/s, max staleness {}", s.node, s.items, s.throughput, s.max_staleness);
    }
    Ok(())
}
