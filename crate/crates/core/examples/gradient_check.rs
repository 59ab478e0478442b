//! Central finite-difference checks of every layer kind and of the full actor and
//! critic of a network profile.
//!
//! ```text
//! cargo run --release --example gradient_check -- [default|compact]
//! ```

use moddrive::approx::gradcheck::{layer_checks, network_checks};
use moddrive::approx::NetSpec;

fn main() {
    let spec = match std::env::args().nth(1).as_deref() {
        Some("compact") => NetSpec::compact_driving(),
        _ => NetSpec::default_driving(),
    };
    let mut worst: f64 = 0.0;
    for r in layer_checks(0).into_iter().chain(network_checks(&spec, 2, Some(6), 0)) {
        println!("{:40} {:5} coords  max rel err {:.2e}  refined steps {}", r.name, r.coordinates, r.max_rel_error, r.refined);
        worst = worst.max(r.max_rel_error);
    }
    println!("worst {worst:.2e}");
}
