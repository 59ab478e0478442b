use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{flip_labels, Camera, Grid, LabelGrid, Observation, PixelGrid, SemanticClass};
use super::VehicleParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterRange {
    /// Half-range of the body-frame camera translation, m.
    pub translation: f64,
    /// Half-range of the camera yaw, rad.
    pub rotation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Half-range of the rotation applied to observations, rad.
    pub rotation: f64,
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub camera_jitter: JitterRange,
    pub vehicles: Vec<VehicleParams>,
    pub augment: AugmentConfig,
    /// Draw a fresh configuration at every episode reset.
    pub reseed_each_episode: bool,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            camera_jitter: JitterRange { translation: 0.15, rotation: 0.03 },
            vehicles: VehicleParams::standard_set(),
            augment: AugmentConfig { rotation: 0.05, label_noise: 0.0 },
            reseed_each_episode: true,
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles.is_empty() {
            return Err(Error::Config("randomization vehicle set is empty".into()));
        }
        for v in &self.vehicles {
            v.validate()?;
        }
        let j = &self.camera_jitter;
        if !(j.translation >= 0.0 && j.translation <= 1.0 && j.rotation >= 0.0 && j.rotation <= 0.5) {
            return Err(Error::Config(format!("camera jitter out of bounds: {j:?}")));
        }
        if !(0.0..=0.2).contains(&self.augment.label_noise) {
            return Err(Error::Config(format!(
                "augmentation label noise must lie in [0, 0.2], got {}",
                self.augment.label_noise
            )));
        }
        if !(self.augment.rotation >= 0.0 && self.augment.rotation <= std::f64::consts::PI) {
            return Err(Error::Config("augmentation rotation range must lie in [0, π]".into()));
        }
        Ok(())
    }
}

/// Everything drawn at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeDraw {
    pub map_index: usize,
    pub vehicle: VehicleParams,
    /// Camera offset in the vehicle body frame.
    pub camera: Camera,
}

/// Deterministically draws map, vehicle dynamics and camera mounting from `seed`.
pub fn randomize_episode(cfg: &RandomizationConfig, map_count: usize, seed: u64) -> Result<EpisodeDraw> {
    cfg.validate()?;
    if map_count == 0 {
        return Err(Error::Config("no maps to draw from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map_index = rng.gen_range(0..map_count);
    let vehicle = cfg.vehicles[rng.gen_range(0..cfg.vehicles.len())];
    let j = cfg.camera_jitter;
    let mut sym = |h: f64| if h > 0.0 { rng.gen_range(-h..=h) } else { 0.0 };
    let camera = Camera { x: sym(j.translation), y: sym(j.translation), heading: sym(j.rotation) };
    Ok(EpisodeDraw { map_index, vehicle, camera })
}

/// Nearest-neighbour rotation about the grid centre; cells sourced from outside the
/// grid become non-drivable.
pub(crate) fn rotate_labels(g: &LabelGrid, angle: f64) -> LabelGrid {
    let mut out = LabelGrid::filled(g.rows, g.cols, SemanticClass::NonDrivable);
    let (s, c) = angle.sin_cos();
    let cy = (g.rows as f64 - 1.0) / 2.0;
    let cx = (g.cols as f64 - 1.0) / 2.0;
    for r in 0..g.rows {
        for col in 0..g.cols {
            let (dy, dx) = (r as f64 - cy, col as f64 - cx);
            // Inverse mapping: sample the source at R(-angle)·(dx, dy).
            let sx = (c * dx + s * dy + cx).round();
            let sy = (-s * dx + c * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < g.cols && (sy as usize) < g.rows {
                out.set(r, col, g.get(sy as usize, sx as usize));
            }
        }
    }
    out
}

fn rotate_pixels(g: &PixelGrid, angle: f64) -> PixelGrid {
    let plane = g.rows * g.cols;
    let mut data = vec![0f32; 3 * plane];
    let (s, c) = angle.sin_cos();
    let cy = (g.rows as f64 - 1.0) / 2.0;
    let cx = (g.cols as f64 - 1.0) / 2.0;
    for r in 0..g.rows {
        for col in 0..g.cols {
            let (dy, dx) = (r as f64 - cy, col as f64 - cx);
            let sx = (c * dx + s * dy + cx).round();
            let sy = (-s * dx + c * dy + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < g.cols && (sy as usize) < g.rows {
                let src = sy as usize * g.cols + sx as usize;
                for ch in 0..3 {
                    data[ch * plane + r * g.cols + col] = g.data[ch * plane + src];
                }
            }
        }
    }
    PixelGrid { rows: g.rows, cols: g.cols, data }
}

/// Observation augmentation: random rotation then optional label noise. Speed is kept.
pub fn augment(obs: &Observation, cfg: &AugmentConfig, seed: u64) -> Observation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = if cfg.rotation > 0.0 { rng.gen_range(-cfg.rotation..=cfg.rotation) } else { 0.0 };
    let grid = match &obs.grid {
        Grid::Labels(g) => {
            let mut out = if angle != 0.0 { rotate_labels(g, angle) } else { g.clone() };
            flip_labels(&mut out, cfg.label_noise, &mut rng);
            Grid::Labels(out)
        }
        Grid::Pixels(p) => Grid::Pixels(if angle != 0.0 { rotate_pixels(p, angle) } else { p.clone() }),
    };
    Observation { grid, speed: obs.speed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn random_grid(seed: u64, n: usize) -> LabelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = LabelGrid::filled(n, n, SemanticClass::Drivable);
        for r in 0..n {
            for c in 0..n {
                g.set(r, c, SemanticClass::from_u8(rng.gen_range(0..3)));
            }
        }
        g
    }

    #[test]
    fn same_seed_same_draw() {
        let cfg = RandomizationConfig::default();
        assert_eq!(randomize_episode(&cfg, 7, 42).unwrap(), randomize_episode(&cfg, 7, 42).unwrap());
    }

    #[test]
    fn zero_jitter_gives_nominal_camera() {
        let cfg = RandomizationConfig { camera_jitter: JitterRange::default(), ..Default::default() };
        for seed in 0..20 {
            assert_eq!(randomize_episode(&cfg, 3, seed).unwrap().camera, Camera::default());
        }
    }

    #[test]
    fn empty_vehicle_set_is_rejected() {
        let cfg = RandomizationConfig { vehicles: vec![], ..Default::default() };
        assert!(randomize_episode(&cfg, 3, 0).is_err());
    }

    #[test]
    fn vehicle_draws_are_uniform() {
        let cfg = RandomizationConfig::default();
        let k = cfg.vehicles.len();
        let n = 10_000;
        let mut counts = vec![0usize; k];
        for seed in 0..n {
            let d = randomize_episode(&cfg, 7, seed as u64).unwrap();
            let i = cfg.vehicles.iter().position(|v| *v == d.vehicle).unwrap();
            counts[i] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma, "{counts:?}");
            chi2 += (c as f64 - n as f64 * p).powi(2) / (n as f64 * p);
        }
        // 3 degrees of freedom: 99.9th percentile is 16.27.
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn identity_augmentation() {
        let obs = Observation { grid: Grid::Labels(random_grid(1, 16)), speed: 0.3 };
        let out = augment(&obs, &AugmentConfig::default(), 9);
        assert_eq!(out, obs);
    }

    #[test]
    fn quarter_turn_round_trip_is_exact() {
        let g = random_grid(2, 64);
        let back = rotate_labels(&rotate_labels(&g, FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(back, g);
        let four = (0..4).fold(g.clone(), |acc, _| rotate_labels(&acc, FRAC_PI_2));
        assert_eq!(four, g);
    }

    #[test]
    fn small_rotation_round_trip_mostly_restores() {
        let g = random_grid(3, 64);
        let back = rotate_labels(&rotate_labels(&g, 0.1), -0.1);
        // Interior cells away from the corners whose sources stay in bounds.
        let (mut same, mut total) = (0, 0);
        for r in 8..56 {
            for c in 8..56 {
                total += 1;
                if back.get(r, c) == g.get(r, c) {
                    same += 1;
                }
            }
        }
        assert!(same as f64 / total as f64 > 0.6, "{same}/{total}");
    }

    #[test]
    fn augmentation_keeps_speed() {
        let obs = Observation { grid: Grid::Labels(random_grid(4, 32)), speed: 0.7 };
        let out = augment(&obs, &AugmentConfig { rotation: 0.3, label_noise: 0.1 }, 5);
        assert_eq!(out.speed, 0.7);
    }
}
