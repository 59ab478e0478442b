use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Polyline, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    Static,
    /// Travels along `path` at constant `speed` starting at t = 0 and stops at its end.
    Scripted { path: Polyline, speed: f64 },
}

/// Rectangular obstacle, static or following a scripted path.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub motion: Motion,
}

impl Obstacle {
    pub fn fixed(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self { center, heading, length, width, motion: Motion::Static }
    }

    /// Footprint at simulation time `t` (seconds).
    pub fn footprint_at(&self, t: f64) -> Obb {
        match &self.motion {
            Motion::Static => Obb::new(self.center, self.heading, self.length, self.width),
            Motion::Scripted { path, speed } => {
                let s = (speed * t).max(0.0);
                let p = path.point_at(s);
                let heading = path.tangent_at(s).angle();
                Obb::new(p, heading, self.length, self.width)
            }
        }
    }

    /// Same obstacle grown by `margin` metres on every side.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ObstacleSpec {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
    pub length: f64,
    pub width: f64,
    /// Scripted path vertices; static when absent.
    #[serde(default)]
    pub path: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub speed: f64,
}

impl ObstacleSpec {
    pub fn build(&self) -> Obstacle {
        let motion = match &self.path {
            Some(pts) if pts.len() >= 2 => Motion::Scripted {
                path: Polyline::new(pts.iter().map(|p| Vec2::new(p[0], p[1])).collect()),
                speed: self.speed,
            },
            _ => Motion::Static,
        };
        let center = match &motion {
            Motion::Scripted { path, .. } => path.point_at(0.0),
            Motion::Static => Vec2::new(self.x, self.y),
        };
        Obstacle {
            center,
            heading: self.heading_deg.to_radians(),
            length: self.length,
            width: self.width,
            motion,
        }
    }
}
