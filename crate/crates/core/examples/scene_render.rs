//! Renders the forward semantic window on a shipped map, its degraded test-time
//! version, and the appearance image an end-to-end agent would see.
//!
//! ```text
//! cargo run --release --example scene_render -- [map] [route position m]
//! ```

use std::sync::Arc;

use image::{Rgb, RgbImage};
use moddrive::control::ControlConfig;
use moddrive::simworld::{
    builtin_scenarios, degrade, render_appearance, Camera, LabelGrid, Palette, SemanticClass, TestRendering, VehicleParams,
    VehicleState,
};
use moddrive::drive::DriveSim;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ascii(g: &LabelGrid) -> String {
    let mut s = String::new();
    for r in 0..g.rows {
        for c in 0..g.cols {
            s.push(match g.get(r, c) {
                SemanticClass::Drivable => '.',
                SemanticClass::Alternative => ':',
                SemanticClass::NonDrivable => '#',
            });
        }
        s.push('\n');
    }
    s
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "three_lane_obstacles".into());
    let s: f64 = args.next().map(|v| v.parse()).transpose()?.unwrap_or(40.0);
    let scenario = builtin_scenarios()
        .into_iter()
        .find(|sc| sc.map.name == name)
        .ok_or_else(|| anyhow::anyhow!("no shipped map named {name}"))?;
    let mut sim = DriveSim::new(
        Arc::new(scenario),
        VehicleParams::default(),
        Camera::default(),
        &ControlConfig::default(),
        VehicleState::default(),
        0.1,
    )?;
    sim.start_at(s, 0.5)?;
    let grid = moddrive::simworld::GridSpec::default();
    let obs = sim.render(&grid);
    let labels = obs.labels().expect("semantic render").clone();
    println!("clean labels ('.' ego lane, ':' other lane, '#' blocked), forward is up:\n{}", ascii(&labels));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = degrade(&labels, &TestRendering::default(), &mut rng);
    println!("degraded for testing:\n{}", ascii(&noisy));

    let px = render_appearance(&noisy, &Palette::realistic(), &mut rng);
    let plane = px.rows * px.cols;
    let mut img = RgbImage::new(px.cols as u32, px.rows as u32);
    for r in 0..px.rows {
        for c in 0..px.cols {
            let ch = |k: usize| (px.data[k * plane + r * px.cols + c].clamp(0.0, 1.0) * 255.0) as u8;
            img.put_pixel(c as u32, r as u32, Rgb([ch(0), ch(1), ch(2)]));
        }
    }
    let path = std::env::temp_dir().join("moddrive_appearance.png");
    img.save(&path)?;
    println!("appearance image written to {}", path.display());
    Ok(())
}
