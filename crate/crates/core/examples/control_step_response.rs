//! Step responses of the low-level chain: the filtered command, the wheel-speed loop
//! and the servo loop, sampled at the control interval.
//!
//! ```text
//! cargo run --example control_step_response
//! ```

use moddrive::control::{nyquist_gain, ControlChain, ControlConfig};
use moddrive::simworld::{step, Action, VehicleParams, VehicleState};

fn main() -> moddrive::Result<()> {
    let cfg = ControlConfig::default();
    println!("filter β = {}: alternating commands are attenuated to {:.3}", cfg.beta, nyquist_gain(cfg.beta));
    let vehicle = VehicleParams::default();
    let mut chain = ControlChain::new(cfg)?;
    let mut state = VehicleState::default();
    let dt = 0.1;
    // Throttle 0.5 asks for three quarters of the top wheel speed; steer a quarter left.
    let cmd = Action::new(0.25, 0.5);
    println!("{:>5} {:>9} {:>9} {:>9} {:>9}", "t", "speed", "target", "servo", "target");
    for k in 0..=60 {
        let out = chain.step(cmd, state.speed, &vehicle, dt)?;
        if k % 5 == 0 {
            println!(
                "{:5.1} {:9.3} {:9.3} {:9.4} {:9.4}",
                k as f64 * dt,
                state.speed,
                out.wheel_speed_target * chain.cfg.wheel_radius,
                out.servo_angle,
                out.servo_target
            );
        }
        state = step(&state, &out.vehicle_action, &vehicle, dt)?;
    }
    Ok(())
}
