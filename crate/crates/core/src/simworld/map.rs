//! Road maps: file schema, derived lane geometry, and lane-relative measurement.
//!
//! A map file is TOML. Each `[[roads]]` entry has a reference line, which is the right
//! edge of the road in its driving direction, given either as explicit `reference`
//! vertices or as `start`/`heading_deg` plus a list of `segments`:
//!
//! ```toml
//! name = "gentle_left"
//! topology = "turn"            # straight | turn | composite
//! split = "train"              # train | test
//!
//! [[roads]]
//! start = [0.0, 0.0]
//! heading_deg = 0.0
//! segments = [{ straight = 60.0 }, { arc = { radius = 40.0, angle_deg = 90.0 } }]
//! lanes = [{ width = 3.5, drivability = "ego" }, { width = 3.5, drivability = "alternative" }]
//! markings = ["solid", "dashed", "double-solid"]   # right edge first, lanes + 1 entries
//!
//! [route]
//! lane = 0                     # global lane index the episode follows
//!
//! [[obstacles]]
//! x = 30.0
//! y = 1.75
//! length = 4.0
//! width = 2.0
//! ```
//!
//! Lanes are listed right to left and are numbered globally in file order. Positive arc
//! angles turn left. Obstacles may carry a `path` of vertices and a `speed` to move.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::obstacle::{Obstacle, ObstacleSpec};
use super::VehicleState;
use crate::error::{Error, Result};
use crate::geometry::{point_segment, wrap_angle, Aabb, Polyline, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marking {
    Dashed,
    Solid,
    DoubleSolid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Drivability {
    /// A lane the ego vehicle is meant to travel in.
    Ego,
    /// Reachable only by a lane change.
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Straight,
    Turn,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSplit {
    Train,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SegmentSpec {
    Straight(f64),
    Arc { radius: f64, angle_deg: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LaneSpec {
    width: f64,
    drivability: Drivability,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RoadSpec {
    #[serde(default)]
    reference: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    start: Option<[f64; 2]>,
    #[serde(default)]
    heading_deg: f64,
    #[serde(default)]
    segments: Option<Vec<SegmentSpec>>,
    lanes: Vec<LaneSpec>,
    markings: Vec<Marking>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RouteSpec {
    lane: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MapFile {
    name: String,
    topology: Topology,
    split: MapSplit,
    roads: Vec<RoadSpec>,
    route: RouteSpec,
    #[serde(default)]
    obstacles: Vec<ObstacleSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: usize,
    pub centerline: Polyline,
    pub width: f64,
    pub drivability: Drivability,
    pub right_boundary: usize,
    pub left_boundary: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub line: Polyline,
    pub kind: Marking,
}

const BUCKET: f64 = 4.0;

/// Uniform bucket grid over lane-centerline segments for point-in-lane queries.
#[derive(Debug, Clone)]
struct LaneIndex {
    origin: Vec2,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<(u32, u32)>>,
}

impl LaneIndex {
    fn build(lanes: &[Lane], bounds: Aabb) -> Self {
        let cols = ((bounds.max.x - bounds.min.x) / BUCKET).ceil().max(1.0) as usize;
        let rows = ((bounds.max.y - bounds.min.y) / BUCKET).ceil().max(1.0) as usize;
        let mut buckets = vec![Vec::new(); cols * rows];
        for lane in lanes {
            let margin = 0.5 * lane.width + 1e-6;
            for s in 0..lane.centerline.segment_count() {
                let (a, b) = lane.centerline.segment(s);
                let bb = Aabb::from_points(&[a, b]).expand(margin);
                let c0 = (((bb.min.x - bounds.min.x) / BUCKET).floor().max(0.0) as usize).min(cols - 1);
                let c1 = (((bb.max.x - bounds.min.x) / BUCKET).floor().max(0.0) as usize).min(cols - 1);
                let r0 = (((bb.min.y - bounds.min.y) / BUCKET).floor().max(0.0) as usize).min(rows - 1);
                let r1 = (((bb.max.y - bounds.min.y) / BUCKET).floor().max(0.0) as usize).min(rows - 1);
                for r in r0..=r1 {
                    for c in c0..=c1 {
                        buckets[r * cols + c].push((lane.id as u32, s as u32));
                    }
                }
            }
        }
        Self { origin: bounds.min, cols, rows, buckets }
    }

    fn bucket(&self, p: Vec2) -> Option<&[(u32, u32)]> {
        let c = ((p.x - self.origin.x) / BUCKET).floor();
        let r = ((p.y - self.origin.y) / BUCKET).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some(&self.buckets[r as usize * self.cols + c as usize])
    }
}

#[derive(Debug, Clone)]
pub struct RoadMap {
    pub name: String,
    pub topology: Topology,
    pub split: MapSplit,
    pub lanes: Vec<Lane>,
    pub boundaries: Vec<Boundary>,
    pub route_lane: usize,
    bounds: Aabb,
    index: LaneIndex,
}

impl RoadMap {
    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn route(&self) -> &Lane {
        &self.lanes[self.route_lane]
    }

    pub fn route_length(&self) -> f64 {
        self.route().centerline.length()
    }

    pub fn min_lane_width(&self) -> f64 {
        self.lanes.iter().map(|l| l.width).fold(f64::INFINITY, f64::min)
    }

    pub fn max_half_width(&self) -> f64 {
        self.lanes.iter().map(|l| 0.5 * l.width).fold(0.0, f64::max)
    }

    /// Nearest lane whose band contains `p`, with the distance to its centerline.
    pub fn containing_lane(&self, p: Vec2) -> Option<(usize, f64)> {
        let entries = self.index.bucket(p)?;
        let mut best: Option<(usize, f64)> = None;
        for &(lane, seg) in entries {
            let l = &self.lanes[lane as usize];
            let (a, b) = l.centerline.segment(seg as usize);
            let (d, _) = point_segment(p, a, b);
            if d <= 0.5 * l.width && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((lane as usize, d));
            }
        }
        best
    }

    pub fn on_road(&self, p: Vec2) -> bool {
        self.containing_lane(p).is_some()
    }

    /// Pose on the route centerline at arc length `s`, heading aligned with the lane.
    pub fn route_pose(&self, s: f64, speed: f64) -> VehicleState {
        let line = &self.route().centerline;
        let p = line.point_at(s);
        VehicleState::new(p.x, p.y, line.tangent_at(s).angle(), speed)
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::Map { map: self.name.clone(), msg };
        if self.lanes.is_empty() {
            return Err(err("no lanes".into()));
        }
        if self.route_lane >= self.lanes.len() {
            return Err(err(format!("route lane {} does not exist", self.route_lane)));
        }
        for lane in &self.lanes {
            if lane.centerline.segment_count() < 1 {
                return Err(err(format!("lane {} has fewer than two vertices", lane.id)));
            }
            if !(lane.width > 0.0) {
                return Err(err(format!("lane {} has non-positive width", lane.id)));
            }
            if !lane.centerline.is_simple() {
                return Err(err(format!("lane {} centerline self-intersects", lane.id)));
            }
        }
        Ok(())
    }
}

/// A map plus the obstacles placed on it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: RoadMap,
    pub obstacles: Vec<Obstacle>,
}

const ARC_SAGITTA: f64 = 2e-4;

fn expand_segments(start: Vec2, heading: f64, segments: &[SegmentSpec]) -> Vec<Vec2> {
    let mut pts = vec![start];
    let mut p = start;
    let mut h = heading;
    for seg in segments {
        match *seg {
            SegmentSpec::Straight(len) => {
                let n = (len / 5.0).ceil().max(1.0) as usize;
                for i in 1..=n {
                    pts.push(p + Vec2::from_angle(h) * (len * i as f64 / n as f64));
                }
                p = *pts.last().unwrap();
            }
            SegmentSpec::Arc { radius, angle_deg } => {
                let total = angle_deg.to_radians();
                let arc_len = radius * total.abs();
                // Chord count keeps the sagitta below ARC_SAGITTA even for lanes offset
                // outward by up to 10 m, so lane distances stay accurate to well under 1 mm.
                let r_out = radius + 10.0;
                let max_step = 2.0 * (1.0 - ARC_SAGITTA / r_out).acos();
                let n = (arc_len / 1.0).ceil().max((total.abs() / max_step).ceil()).max(1.0) as usize;
                let side = total.signum();
                let center = p + Vec2::from_angle(h).perp() * (radius * side);
                let start_angle = (p - center).angle();
                for i in 1..=n {
                    let a = start_angle + total * i as f64 / n as f64;
                    pts.push(center + Vec2::from_angle(a) * radius);
                }
                p = *pts.last().unwrap();
                h += total;
            }
        }
    }
    pts
}

/// Parses a map file body. `origin` names the source in diagnostics.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let file: MapFile = toml::from_str(text).map_err(|e| Error::Map { map: origin.to_string(), msg: e.to_string() })?;
    let err = |msg: String| Error::Map { map: file.name.clone(), msg };
    let mut lanes = Vec::new();
    let mut boundaries = Vec::new();
    for (ri, road) in file.roads.iter().enumerate() {
        let reference: Vec<Vec2> = match (&road.reference, &road.segments) {
            (Some(v), _) => v.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            (None, Some(segs)) => {
                let s = road.start.unwrap_or([0.0, 0.0]);
                expand_segments(Vec2::new(s[0], s[1]), road.heading_deg.to_radians(), segs)
            }
            (None, None) => return Err(err(format!("road {ri} needs `reference` or `segments`"))),
        };
        if reference.len() < 2 {
            return Err(err(format!("road {ri} reference has fewer than two vertices")));
        }
        if road.markings.len() != road.lanes.len() + 1 {
            return Err(err(format!(
                "road {ri} has {} lanes but {} markings (need lanes + 1)",
                road.lanes.len(),
                road.markings.len()
            )));
        }
        let reference = Polyline::new(reference);
        let first_boundary = boundaries.len();
        let mut offset = 0.0;
        boundaries.push(Boundary { line: reference.offset(0.0), kind: road.markings[0] });
        for (li, lane) in road.lanes.iter().enumerate() {
            if !(lane.width > 0.0) {
                return Err(err(format!("road {ri} lane {li} width must be positive")));
            }
            let id = lanes.len();
            lanes.push(Lane {
                id,
                centerline: reference.offset(offset + 0.5 * lane.width),
                width: lane.width,
                drivability: lane.drivability,
                right_boundary: first_boundary + li,
                left_boundary: first_boundary + li + 1,
            });
            offset += lane.width;
            boundaries.push(Boundary { line: reference.offset(offset), kind: road.markings[li + 1] });
        }
    }
    if lanes.is_empty() {
        return Err(err("map has no lanes".into()));
    }
    let bounds = boundaries
        .iter()
        .map(|b| b.line.bounds())
        .reduce(Aabb::union)
        .expect("at least one boundary")
        .expand(BUCKET);
    let index = LaneIndex::build(&lanes, bounds);
    let map = RoadMap {
        name: file.name.clone(),
        topology: file.topology,
        split: file.split,
        lanes,
        boundaries,
        route_lane: file.route.lane,
        bounds,
        index,
    };
    map.validate()?;
    let obstacles = file.obstacles.iter().map(ObstacleSpec::build).collect::<Vec<_>>();
    for (i, o) in obstacles.iter().enumerate() {
        if !(o.length > 0.0 && o.width > 0.0) {
            return Err(err(format!("obstacle {i} must have positive footprint")));
        }
    }
    Ok(Scenario { map, obstacles })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Map { map: path.display().to_string(), msg: e.to_string() })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Loads every `*.toml` map in a directory, sorted by file name.
pub fn load_scenarios_from_dir(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Map { map: dir.display().to_string(), msg: e.to_string() })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_scenario(p)).collect()
}

const BUILTIN_MAPS: [(&str, &str); 8] = [
    ("straight_two_lane", include_str!("../../maps/straight_two_lane.toml")),
    ("gentle_left", include_str!("../../maps/gentle_left.toml")),
    ("right_hairpin", include_str!("../../maps/right_hairpin.toml")),
    ("s_curve", include_str!("../../maps/s_curve.toml")),
    ("three_lane_obstacles", include_str!("../../maps/three_lane_obstacles.toml")),
    ("chicane", include_str!("../../maps/chicane.toml")),
    ("loop_back", include_str!("../../maps/loop_back.toml")),
    ("heldout_town", include_str!("../../maps/heldout_town.toml")),
];

/// The maps shipped with the crate: seven training maps and one held-out test map.
pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN_MAPS
        .iter()
        .map(|(name, text)| parse_scenario(text, name).expect("builtin map parses"))
        .collect()
}

/// Lane-relative measurement of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneMeasure {
    /// Distance to the nearest ego-drivable centerline, m.
    pub d: f64,
    /// Absolute heading difference to that centerline, in [0, π].
    pub alpha: f64,
    /// Lane whose band contains the vehicle.
    pub lane: Option<usize>,
    pub off_road: bool,
    /// Arc length of the foot point on the route lane.
    pub route_s: f64,
}

/// Distance and heading error against the nearest ego-drivable lane centerline.
///
/// Off the road the distance is pinned to the widest half lane width, which zeroes the
/// centering reward under the default configuration.
pub fn measure_lane(state: &VehicleState, map: &RoadMap) -> LaneMeasure {
    let p = state.position();
    let lane = map.containing_lane(p).map(|(id, _)| id);
    let route_s = map.route().centerline.project(p).s;
    let nearest = map
        .lanes
        .iter()
        .filter(|l| l.drivability == Drivability::Ego)
        .map(|l| l.centerline.project(p))
        .min_by(|a, b| a.dist.total_cmp(&b.dist));
    match (lane, nearest) {
        (Some(_), Some(pr)) => LaneMeasure {
            d: pr.dist,
            alpha: wrap_angle(state.heading - pr.tangent.angle()).abs(),
            lane,
            off_road: false,
            route_s,
        },
        (_, nearest) => LaneMeasure {
            d: map.max_half_width(),
            alpha: nearest.map_or(0.0, |pr| wrap_angle(state.heading - pr.tangent.angle()).abs()),
            lane,
            off_road: true,
            route_s,
        },
    }
}
