//! Bird's-eye rendering of the three-class drivable-space representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::map::RoadMap;
use super::VehicleState;
use crate::geometry::{Obb, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    /// The lane currently occupied by the ego vehicle.
    Drivable = 0,
    /// Road reachable only through a lane change.
    Alternative = 1,
    /// Off-road or blocked by an obstacle.
    NonDrivable = 2,
}

impl SemanticClass {
    pub const COUNT: usize = 3;

    pub fn from_u8(v: u8) -> Self {
        match v {
            0 => SemanticClass::Drivable,
            1 => SemanticClass::Alternative,
            _ => SemanticClass::NonDrivable,
        }
    }
}

/// Geometry of the forward-facing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Cell edge length, m.
    pub cell: f64,
    /// How far the window extends behind the camera, m.
    pub behind: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 64, cols: 64, cell: 0.25, behind: 2.0 }
    }
}

impl GridSpec {
    /// Cell centre in the camera frame as (forward, left).
    pub fn cell_local(&self, r: usize, c: usize) -> Vec2 {
        Vec2::new(
            (self.rows as f64 - r as f64 - 0.5) * self.cell - self.behind,
            (0.5 * self.cols as f64 - c as f64 - 0.5) * self.cell,
        )
    }
}

/// Class label per cell, row-major with row 0 farthest ahead. Holding a single label
/// per cell makes the one-hot property structural.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelGrid {
    pub rows: usize,
    pub cols: usize,
    labels: Vec<u8>,
}

impl LabelGrid {
    pub fn filled(rows: usize, cols: usize, class: SemanticClass) -> Self {
        Self { rows, cols, labels: vec![class as u8; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> SemanticClass {
        SemanticClass::from_u8(self.labels[r * self.cols + c])
    }

    pub fn set(&mut self, r: usize, c: usize, class: SemanticClass) {
        self.labels[r * self.cols + c] = class as u8;
    }

    pub fn raw(&self) -> &[u8] {
        &self.labels
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut n = [0; 3];
        for &l in &self.labels {
            n[l as usize] += 1;
        }
        n
    }

    /// Channel-major one-hot planes, shape 3 × rows × cols.
    pub fn one_hot_into(&self, out: &mut [f64]) {
        let plane = self.rows * self.cols;
        out[..3 * plane].iter_mut().for_each(|v| *v = 0.0);
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize * plane + i] = 1.0;
        }
    }

    /// Four cells per byte.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.labels.len().div_ceil(4)];
        for (i, &l) in self.labels.iter().enumerate() {
            out[i / 4] |= (l & 3) << ((i % 4) * 2);
        }
        out
    }

    pub fn unpack(rows: usize, cols: usize, packed: &[u8]) -> Self {
        let labels = (0..rows * cols).map(|i| (packed[i / 4] >> ((i % 4) * 2)) & 3).collect();
        Self { rows, cols, labels }
    }
}

/// Appearance-like image: three float channels, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Labels(LabelGrid),
    Pixels(PixelGrid),
}

/// Planning state: the rendered grid plus speed normalized by the vehicle's top speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub grid: Grid,
    pub speed: f64,
}

impl Observation {
    pub fn labels(&self) -> Option<&LabelGrid> {
        match &self.grid {
            Grid::Labels(g) => Some(g),
            Grid::Pixels(_) => None,
        }
    }
}

/// Camera pose in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Camera {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Camera {
    /// Camera rigidly mounted on the vehicle with a body-frame offset (forward, left, yaw).
    pub fn mounted(state: &VehicleState, offset: &Camera) -> Self {
        let p = state.position() + Vec2::new(offset.x, offset.y).rotate(state.heading);
        Self { x: p.x, y: p.y, heading: state.heading + offset.heading }
    }

    pub fn to_world(&self, local: Vec2) -> Vec2 {
        Vec2::new(self.x, self.y) + local.rotate(self.heading)
    }
}

/// Rasterizes the ground-truth semantics around the vehicle.
///
/// Cells inside an obstacle or outside every lane are non-drivable, cells in the lane
/// the vehicle occupies are drivable, and cells in any other lane are alternatively
/// drivable.
pub fn render_semantic(
    map: &RoadMap,
    state: &VehicleState,
    obstacles: &[Obb],
    camera: &Camera,
    spec: &GridSpec,
    v_max: f64,
) -> Observation {
    let ego_lane = map.containing_lane(state.position()).map(|(id, _)| id);
    let reach = spec.rows.max(spec.cols) as f64 * spec.cell * 1.5 + spec.behind;
    let cam = Vec2::new(camera.x, camera.y);
    let near: Vec<&Obb> = obstacles
        .iter()
        .filter(|o| o.center.dist(cam) < reach + o.half_length + o.half_width)
        .collect();
    let mut grid = LabelGrid::filled(spec.rows, spec.cols, SemanticClass::NonDrivable);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let p = camera.to_world(spec.cell_local(r, c));
            if near.iter().any(|o| o.contains(p)) {
                continue;
            }
            let class = match map.containing_lane(p) {
                Some((id, _)) if Some(id) == ego_lane => SemanticClass::Drivable,
                Some(_) => SemanticClass::Alternative,
                None => SemanticClass::NonDrivable,
            };
            grid.set(r, c, class);
        }
    }
    Observation { grid: Grid::Labels(grid), speed: (state.speed / v_max).clamp(0.0, 1.0) }
}

/// Perception-like corruption applied to evaluation renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestRendering {
    /// Cells by which the non-drivable class grows into its 4-neighbourhood.
    pub dilation: usize,
    /// Probability that a cell takes a different, uniformly drawn class.
    pub label_noise: f64,
}

impl Default for TestRendering {
    fn default() -> Self {
        Self { dilation: 1, label_noise: 0.05 }
    }
}

/// Applies boundary dilation followed by per-cell label noise.
pub fn degrade<R: Rng>(grid: &LabelGrid, cfg: &TestRendering, rng: &mut R) -> LabelGrid {
    let mut g = grid.clone();
    for _ in 0..cfg.dilation {
        let src = g.clone();
        for r in 0..g.rows {
            for c in 0..g.cols {
                if src.get(r, c) == SemanticClass::NonDrivable {
                    continue;
                }
                let blocked = (r > 0 && src.get(r - 1, c) == SemanticClass::NonDrivable)
                    || (r + 1 < g.rows && src.get(r + 1, c) == SemanticClass::NonDrivable)
                    || (c > 0 && src.get(r, c - 1) == SemanticClass::NonDrivable)
                    || (c + 1 < g.cols && src.get(r, c + 1) == SemanticClass::NonDrivable);
                if blocked {
                    g.set(r, c, SemanticClass::NonDrivable);
                }
            }
        }
    }
    flip_labels(&mut g, cfg.label_noise, rng);
    g
}

pub(crate) fn flip_labels<R: Rng>(g: &mut LabelGrid, p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    for l in g.labels.iter_mut() {
        if rng.gen::<f64>() < p {
            let shift = rng.gen_range(1..3u8);
            *l = (*l + shift) % 3;
        }
    }
}

/// Per-class colours of an appearance rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: [[f32; 3]; 3],
    /// Amplitude of uniform per-cell texture noise.
    pub texture: f32,
}

impl Palette {
    /// Flat colours used while training.
    pub fn coarse() -> Self {
        Self {
            colors: [[0.35, 0.35, 0.38], [0.55, 0.55, 0.58], [0.20, 0.55, 0.20]],
            texture: 0.0,
        }
    }

    /// Textured evaluation look with shifted colours.
    pub fn realistic() -> Self {
        Self {
            colors: [[0.52, 0.50, 0.47], [0.40, 0.40, 0.42], [0.45, 0.42, 0.30]],
            texture: 0.18,
        }
    }
}

/// Turns labels into an appearance image, standing in for raw camera input.
pub fn render_appearance<R: Rng>(grid: &LabelGrid, palette: &Palette, rng: &mut R) -> PixelGrid {
    let plane = grid.rows * grid.cols;
    let mut data = vec![0f32; 3 * plane];
    for (i, &l) in grid.raw().iter().enumerate() {
        let base = palette.colors[l as usize];
        for ch in 0..3 {
            let noise = if palette.texture > 0.0 { rng.gen_range(-palette.texture..palette.texture) } else { 0.0 };
            data[ch * plane + i] = (base[ch] + noise).clamp(0.0, 1.0);
        }
    }
    PixelGrid { rows: grid.rows, cols: grid.cols, data }
}
