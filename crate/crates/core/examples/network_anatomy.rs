//! Parameter census and update cost of the shipped network profiles.
//!
//! ```text
//! cargo run --release --example network_anatomy
//! ```

use std::time::Instant;

use moddrive::approx::gradcheck::random_input;
use moddrive::approx::{Bound, NetParams, NetSpec, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    for (name, spec) in [("default", NetSpec::default_driving()), ("compact", NetSpec::compact_driving())] {
        let c = spec.census();
        let macs = spec.encoder.as_ref().map_or(0, |e| e.macs());
        println!(
            "{name:8} conv {:6}  fc {:5}  total {:6}  fc share {:.2}%  encoder MACs/sample {macs}",
            c.conv,
            c.fully_connected,
            c.total(),
            100.0 * c.fc_fraction()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = NetParams::init(&spec, &mut rng);
        for batch in [64, 256] {
            let input = random_input(&spec, batch, &mut rng);
            let t0 = Instant::now();
            let mut tape = Tape::new();
            let bank = tape.declare_bank(params.encoder.len());
            let qb = tape.declare_bank(params.critic1.len());
            let f = spec.encode(&mut tape, Bound::trainable(&params.encoder, bank), &input).unwrap();
            let a = tape.constant(Tensor::zeros(vec![batch, spec.action_dim]));
            let q = spec.critic_head(&mut tape, Bound::trainable(&params.critic1, qb), f, Some(a));
            let l = tape.mean(q);
            let fwd = t0.elapsed();
            tape.backward(l).unwrap();
            println!("    batch {batch:3}: encoder+critic forward {:?}, forward+backward {:?}", fwd, t0.elapsed());
        }
    }
}
