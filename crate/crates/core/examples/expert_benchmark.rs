//! The scripted pure-pursuit driver through the benchmark: every shipped map, with and
//! without the train/test gap, plus a trajectory plot of the held-out map.
//!
//! ```text
//! cargo run --release --example expert_benchmark
//! ```

use moddrive::bench::plot::plot_trajectory;
use moddrive::bench::{nogap_eval, BenchConfig, DrivingPolicy, EvalSuite, GapConfig, PurePursuit};
use moddrive::drive::split_scenarios;
use moddrive::simworld::builtin_scenarios;

fn main() -> moddrive::Result<()> {
    let (train, test) = split_scenarios(builtin_scenarios());
    let suite = EvalSuite { episodes: train.len(), train, test, seed: 1, gap: GapConfig::default(), bench: BenchConfig::default() };
    let factory = || -> moddrive::Result<Box<dyn DrivingPolicy>> { Ok(Box::new(PurePursuit::default())) };
    let (report, _, test_logs) = nogap_eval(&factory, &suite)?;
    println!("train condition\n{}", report.train.table());
    println!("all gaps\n{}", report.test.table());
    let path = std::env::temp_dir().join("moddrive_expert_heldout.png");
    plot_trajectory(&test_logs[0], Some(&suite.test[0].map), &path)?;
    println!("held-out trajectory written to {}", path.display());
    Ok(())
}
