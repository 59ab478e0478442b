//! SAC on the one-dimensional point mass, scored against the best saturated PD law.
//!
//! ```text
//! cargo run --release --example point_mass_sac -- [env steps] [seed]
//! ```

use moddrive::approx::NetSpec;
use moddrive::sac::env::{point_mass_oracle, point_mass_score, point_mass_starts};
use moddrive::sac::{train, ActionMode, InputEncoding, Learner, PointMass, SacConfig, TrainOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> moddrive::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer argument"));
    let steps = args.next().unwrap_or(30_000);
    let seed = args.next().unwrap_or(0);
    let starts = point_mass_starts(21);
    let (kp, kd, oracle) = point_mass_oracle(&starts);
    println!("PD oracle kp {kp}, kd {kd}: mean return {oracle:.2}");

    // One action dimension, so the entropy target is −1.
    let cfg = SacConfig { target_entropy: -1.0, ..SacConfig::default() };
    let mut learner = Learner::new(NetSpec::mlp(2, 1, vec![64, 64]), InputEncoding::Vector, cfg, seed)?;
    let t0 = std::time::Instant::now();
    let summary = train(PointMass::new(), &mut learner, TrainOptions::new(steps, seed), &mut ())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let score = point_mass_score(&starts, |o| Ok(learner.select_action(o, ActionMode::Deterministic, &mut rng)?[0]))?;
    println!(
        "SAC after {steps} steps ({} updates, {} episodes, {:.1?}): {score:.2} = {:.1}% of the oracle, temperature {:.4}",
        summary.updates,
        summary.episodes.len(),
        t0.elapsed(),
        100.0 * score / oracle,
        learner.temperature()
    );
    Ok(())
}
