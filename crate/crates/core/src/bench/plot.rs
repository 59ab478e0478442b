//! Static PNG figures: top-down trajectory traces and training curves.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::EpisodeLog;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec2};
use crate::simworld::RoadMap;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GREY: Rgb<u8> = Rgb([150, 150, 150]);
const LIGHT: Rgb<u8> = Rgb([215, 215, 215]);
const BLUE: Rgb<u8> = Rgb([30, 80, 200]);
const RED: Rgb<u8> = Rgb([210, 30, 30]);

struct Canvas {
    img: RgbImage,
    bounds: Aabb,
    scale: f64,
    pad: f64,
}

impl Canvas {
    fn new(bounds: Aabb, max_px: u32) -> Self {
        let w = (bounds.max.x - bounds.min.x).max(1e-6);
        let h = (bounds.max.y - bounds.min.y).max(1e-6);
        let pad = 10.0;
        let scale = (max_px as f64 - 2.0 * pad) / w.max(h);
        let img = RgbImage::from_pixel((w * scale + 2.0 * pad).ceil() as u32, (h * scale + 2.0 * pad).ceil() as u32, WHITE);
        Self { img, bounds, scale, pad }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        let x = self.pad + (p.x - self.bounds.min.x) * self.scale;
        // Image rows grow downward; world y grows upward.
        let y = self.img.height() as f64 - self.pad - (p.y - self.bounds.min.y) * self.scale;
        (x, y)
    }

    fn dot(&mut self, x: f64, y: f64, r: i64, c: Rgb<u8>) {
        let (cx, cy) = (x.round() as i64, y.round() as i64);
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (cx + dx, cy + dy);
                if px >= 0 && py >= 0 && (px as u32) < self.img.width() && (py as u32) < self.img.height() {
                    self.img.put_pixel(px as u32, py as u32, c);
                }
            }
        }
    }

    fn line(&mut self, a: Vec2, b: Vec2, c: Rgb<u8>) {
        let (p, q) = (self.px(a), self.px(b));
        let n = (q.0 - p.0).abs().max((q.1 - p.1).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            self.dot(p.0 + (q.0 - p.0) * t, p.1 + (q.1 - p.1) * t, 0, c);
        }
    }

    fn polyline(&mut self, pts: &[Vec2], c: Rgb<u8>) {
        for w in pts.windows(2) {
            self.line(w[0], w[1], c);
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path).map_err(|e| Error::InvalidInput(format!("writing {}: {e}", path.display())))
    }
}

/// Road boundaries, the driven path, and a red square at every intervention. Resets
/// break the path.
pub fn plot_trajectory(log: &EpisodeLog, map: Option<&RoadMap>, path: &Path) -> Result<()> {
    let pts: Vec<Vec2> = log.steps.iter().map(|s| Vec2::new(s.x, s.y)).collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput("nothing to plot: the log has no steps".into()));
    }
    let mut bounds = Aabb::from_points(&pts);
    if let Some(m) = map {
        bounds = bounds.union(m.bounds());
    }
    let mut canvas = Canvas::new(bounds.expand(2.0), 800);
    if let Some(m) = map {
        for lane in &m.lanes {
            canvas.polyline(lane.centerline.points(), LIGHT);
        }
        for b in &m.boundaries {
            canvas.polyline(b.line.points(), GREY);
        }
    }
    let mut segment_start = 0;
    for x in &log.interventions {
        let end = (x.step + 1).min(pts.len());
        canvas.polyline(&pts[segment_start..end], BLUE);
        segment_start = end;
    }
    canvas.polyline(&pts[segment_start..], BLUE);
    for x in &log.interventions {
        let (px, py) = canvas.px(Vec2::new(x.x, x.y));
        canvas.dot(px, py, 3, RED);
    }
    canvas.save(path)
}

/// Line plot of `(x, y)` points scaled to fill the frame, with a light zero line when
/// zero is in range.
pub fn plot_curve(points: &[(f64, f64)], path: &Path) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("nothing to plot: no points".into()));
    }
    let pts: Vec<Vec2> = points.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
    let b = Aabb::from_points(&pts);
    // Stretch to a 4:3 frame independently of the data's aspect.
    let (w, h) = ((b.max.x - b.min.x).max(1e-9), (b.max.y - b.min.y).max(1e-9));
    let norm: Vec<Vec2> = pts.iter().map(|p| Vec2::new((p.x - b.min.x) / w * 4.0, (p.y - b.min.y) / h * 3.0)).collect();
    let mut canvas = Canvas::new(Aabb::from_points(&[Vec2::new(0.0, 0.0), Vec2::new(4.0, 3.0)]), 640);
    if b.min.y < 0.0 && b.max.y > 0.0 {
        let y0 = -b.min.y / h * 3.0;
        canvas.line(Vec2::new(0.0, y0), Vec2::new(4.0, y0), LIGHT);
    }
    canvas.polyline(&norm, BLUE);
    canvas.save(path)
}
