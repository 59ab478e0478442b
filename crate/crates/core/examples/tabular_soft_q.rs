//! Discrete soft actor-critic on a five-state ring MDP, compared with soft value
//! iteration run to convergence.
//!
//! ```text
//! cargo run --release --example tabular_soft_q
//! ```

use moddrive::sac::discrete::train_tabular;
use moddrive::sac::{DiscreteConfig, TabularMdp};

fn main() -> moddrive::Result<()> {
    let mdp = TabularMdp::ring5();
    let cfg = DiscreteConfig { gamma: 0.9, lr: 1e-2, tau: 0.05, temperature: 0.2, batch_size: 32 };
    let oracle = mdp.soft_value_iteration(cfg.gamma, cfg.temperature, 1e-12);
    println!("soft value iteration Q*:");
    for (s, row) in oracle.iter().enumerate() {
        println!("  s{s}: {row:.4?}");
    }
    for updates in [100, 1_000, 5_000, 20_000] {
        let (_, gap) = train_tabular(&mdp, cfg.clone(), updates, 0)?;
        println!("{updates:>6} updates: sup-norm gap {gap:.2e}");
    }
    Ok(())
}
