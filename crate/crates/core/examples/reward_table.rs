//! Prints the shaped driving reward over a sweep of speed, lateral offset and heading
//! error, plus the event penalties.
//!
//! ```text
//! cargo run --example reward_table
//! ```

use moddrive::reward::{speed_reward, total_reward, RewardConfig};
use moddrive::simworld::StepEvents;

fn main() -> moddrive::Result<()> {
    let cfg = RewardConfig::default();
    println!("{cfg:?}\n");
    println!("speed term:");
    for v in [0.0, 0.5 * cfg.v_min, cfg.v_min, cfg.v_target, 0.5 * (cfg.v_target + cfg.v_max), cfg.v_max] {
        println!("  v = {v:5.2} m/s -> {:.3}", speed_reward(v, &cfg)?);
    }
    println!("\ntotal at target speed (rows: offset d, columns: heading error α):");
    let alphas = [0.0, 0.25 * cfg.alpha_max, 0.5 * cfg.alpha_max, cfg.alpha_max];
    print!("{:>8}", "d \\ α");
    for a in alphas {
        print!("{a:>8.3}");
    }
    println!();
    for d in [0.0, 0.25 * cfg.d_max, 0.5 * cfg.d_max, cfg.d_max] {
        print!("{d:>8.3}");
        for a in alphas {
            print!("{:>8.3}", total_reward(cfg.v_target, d, a, &StepEvents::default(), &cfg)?);
        }
        println!();
    }
    let events = [
        ("collision", StepEvents { collision: true, ..Default::default() }),
        ("solid line", StepEvents { crossed_solid: true, ..Default::default() }),
        ("double solid", StepEvents { crossed_double_solid: true, ..Default::default() }),
    ];
    println!();
    for (name, e) in events {
        println!("{name:>12}: {:.3}", total_reward(cfg.v_target, 0.0, 0.0, &e, &cfg)?);
    }
    Ok(())
}
