use serde::{Deserialize, Serialize};

use super::map::{Marking, RoadMap};
use super::obstacle::Obstacle;
use super::{VehicleParams, VehicleState};
use crate::geometry::{segments_intersect, wrap_angle, Aabb, Obb, Vec2};

/// A step moving less than this (m) counts as stationary.
pub const STATIONARY_EPSILON: f64 = 0.01;

/// Sub-samples of the swept footprint checked against obstacles per step.
const SWEEP_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collision: bool,
    pub crossed_solid: bool,
    pub crossed_double_solid: bool,
    /// Consecutive steps with displacement below [`STATIONARY_EPSILON`].
    pub stationary_steps: u32,
}

impl StepEvents {
    pub fn any_penalty(&self) -> bool {
        self.collision || self.crossed_solid || self.crossed_double_solid
    }
}

fn interpolate(a: &VehicleState, b: &VehicleState, t: f64) -> VehicleState {
    VehicleState {
        x: a.x + (b.x - a.x) * t,
        y: a.y + (b.y - a.y) * t,
        heading: a.heading + wrap_angle(b.heading - a.heading) * t,
        speed: a.speed + (b.speed - a.speed) * t,
    }
}

/// Whether the footprint sweeping linearly from `prev` to `next` touches any obstacle.
pub(crate) fn swept_obstacle_hit(
    prev: &VehicleState,
    next: &VehicleState,
    params: &VehicleParams,
    obstacles: &[Obstacle],
    t_prev: f64,
    dt: f64,
) -> bool {
    let reach = prev.position().dist(next.position()) + params.length + params.width;
    obstacles.iter().any(|o| {
        let far = o.footprint_at(t_prev);
        let near_end = o.footprint_at(t_prev + dt);
        let radius = o.length + o.width;
        if far.center.dist(prev.position()) > reach + radius + far.center.dist(near_end.center) {
            return false;
        }
        (0..=SWEEP_SUBSTEPS).any(|k| {
            let f = k as f64 / SWEEP_SUBSTEPS as f64;
            let s = interpolate(prev, next, f);
            s.footprint(params).overlaps(&o.footprint_at(t_prev + f * dt))
        })
    })
}

pub(crate) fn footprint_off_road(fp: &Obb, map: &RoadMap) -> bool {
    fp.corners().iter().any(|c| !map.on_road(*c))
}

/// Classifies what happened between two consecutive states.
///
/// Collision covers obstacle contact anywhere along the swept step and any footprint
/// corner leaving the road at the end of the step. Line crossings use the path of the
/// vehicle reference point.
#[allow(clippy::too_many_arguments)]
pub fn detect_events(
    prev: &VehicleState,
    next: &VehicleState,
    params: &VehicleParams,
    map: &RoadMap,
    obstacles: &[Obstacle],
    t_prev: f64,
    dt: f64,
    prev_stationary: u32,
) -> StepEvents {
    let collision = swept_obstacle_hit(prev, next, params, obstacles, t_prev, dt)
        || footprint_off_road(&next.footprint(params), map);
    let (a, b) = (prev.position(), next.position());
    let mut crossed_solid = false;
    let mut crossed_double_solid = false;
    if a.dist(b) > 0.0 {
        let step_box = Aabb::from_points(&[a, b]);
        for boundary in &map.boundaries {
            let hit = (0..boundary.line.segment_count()).any(|i| {
                let (p, q) = boundary.line.segment(i);
                let sb = Aabb::from_points(&[p, q]);
                let overlap = sb.min.x <= step_box.max.x
                    && sb.max.x >= step_box.min.x
                    && sb.min.y <= step_box.max.y
                    && sb.max.y >= step_box.min.y;
                overlap && segments_intersect(a, b, p, q)
            });
            if hit {
                match boundary.kind {
                    Marking::Solid => crossed_solid = true,
                    Marking::DoubleSolid => crossed_double_solid = true,
                    Marking::Dashed => {}
                }
            }
        }
    }
    let moved: Vec2 = b - a;
    let stationary_steps = if moved.norm() < STATIONARY_EPSILON { prev_stationary + 1 } else { 0 };
    StepEvents { collision, crossed_solid, crossed_double_solid, stationary_steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::{parse_scenario, step, Action};

    const ROAD: &str = r#"
name = "t"
topology = "straight"
split = "train"
[[roads]]
reference = [[-50.0, -1.75], [200.0, -1.75]]
lanes = [{ width = 3.5, drivability = "ego" }, { width = 3.5, drivability = "alternative" }, { width = 3.5, drivability = "alternative" }]
markings = ["solid", "double-solid", "solid", "solid"]
[route]
lane = 0
"#;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn quiet_step_counts_as_stationary() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let s = VehicleState::new(10.0, 0.0, 0.0, 0.0);
        let e = detect_events(&s, &s, &params(), &sc.map, &[], 0.0, 0.1, 4);
        assert_eq!(e, StepEvents { stationary_steps: 5, ..StepEvents::default() });
    }

    #[test]
    fn crossing_double_solid_sets_only_that_flag() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let a = VehicleState::new(10.0, 1.6, 0.3, 2.0);
        let b = VehicleState::new(10.3, 1.9, 0.3, 2.0);
        let e = detect_events(&a, &b, &params(), &sc.map, &[], 0.0, 0.1, 0);
        assert!(e.crossed_double_solid);
        assert!(!e.crossed_solid);
        assert!(!e.collision);
        assert_eq!(e.stationary_steps, 0);
    }

    #[test]
    fn solid_line_crossing() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let a = VehicleState::new(10.0, 5.1, 0.3, 2.0);
        let b = VehicleState::new(10.3, 5.4, 0.3, 2.0);
        let e = detect_events(&a, &b, &params(), &sc.map, &[], 0.0, 0.1, 0);
        assert!(e.crossed_solid && !e.crossed_double_solid);
    }

    #[test]
    fn leaving_the_road_is_a_collision() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let a = VehicleState::new(10.0, -0.5, 0.0, 2.0);
        let b = VehicleState::new(10.2, -1.2, 0.0, 2.0);
        let e = detect_events(&a, &b, &params(), &sc.map, &[], 0.0, 0.1, 0);
        assert!(e.collision);
    }

    /// Oracle: integrate the bicycle with dt/100 and test every intermediate footprint.
    fn fine_sweep(start: &VehicleState, action: &Action, p: &VehicleParams, obstacles: &[Obstacle], dt: f64) -> bool {
        let mut s = *start;
        for _ in 0..100 {
            s = step(&s, action, p, dt / 100.0).unwrap();
            if obstacles.iter().any(|o| s.footprint(p).overlaps(&o.footprint_at(0.0))) {
                return true;
            }
        }
        false
    }

    #[test]
    fn grazing_corner_matches_fine_sweep() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let p = VehicleParams { drag: 0.0, ..params() };
        let dt = 0.1;
        let start = VehicleState::new(0.0, 0.0, 0.0, 8.0);
        let action = Action::new(0.0, 0.0);
        let next = step(&start, &action, &p, dt).unwrap();
        // Diamond obstacle whose corner points down at the vehicle's left side,
        // placed mid-step so only the swept motion can touch it.
        let side = 1.0;
        let half_diag = side * std::f64::consts::SQRT_2 / 2.0;
        for gap in [-0.004, -0.001, 0.001, 0.004] {
            let corner_y = p.width / 2.0 + gap;
            let o = Obstacle::fixed(
                Vec2::new(0.4 + p.length / 2.0 - 0.3, corner_y + half_diag),
                std::f64::consts::FRAC_PI_4,
                side,
                side,
            );
            let obstacles = [o];
            let got = detect_events(&start, &next, &p, &sc.map, &obstacles, 0.0, dt, 0).collision;
            let oracle = fine_sweep(&start, &action, &p, &obstacles, dt);
            assert_eq!(got, oracle, "gap {gap}");
            assert_eq!(got, gap < 0.0);
        }
    }

    #[test]
    fn mid_step_obstacle_is_not_tunnelled() {
        let sc = parse_scenario(ROAD, "t").unwrap();
        let p = params();
        let a = VehicleState::new(0.0, 0.0, 0.0, 60.0);
        let b = VehicleState::new(6.0, 0.0, 0.0, 60.0);
        let o = Obstacle::fixed(Vec2::new(3.0 + p.length, 0.0), 0.0, 0.2, 0.2);
        assert!(detect_events(&a, &b, &p, &sc.map, &[o], 0.0, 0.1, 0).collision);
    }
}
