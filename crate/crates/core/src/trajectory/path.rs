use crate::geometry::{point_along, polyline_length, Point2, Point3, Polygon, GEOM_EPS};

use super::TrajectoryError;

fn inside_any(p: &Point2, zones: &[Polygon]) -> bool {
    zones.iter().any(|z| z.contains(p))
}

fn visible(a: &Point2, b: &Point2, zones: &[Polygon]) -> bool {
    !zones.iter().any(|z| z.blocks_segment(a, b))
}

/// Shortest 2-D route from `a` to `b` around `zones`, whose vertices are
/// inflated by `margin`. Returns the intermediate corners only.
fn route_2d(a: Point2, b: Point2, zones: &[Polygon], margin: f64) -> Option<Vec<Point2>> {
    if visible(&a, &b, zones) {
        return Some(Vec::new());
    }
    let mut nodes = vec![a, b];
    for z in zones {
        for v in z.inflated_vertices(margin) {
            if !inside_any(&v, zones) && !zones.iter().any(|z| z.on_boundary(&v)) {
                nodes.push(v);
            }
        }
    }
    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    loop {
        let mut u = usize::MAX;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && (u == usize::MAX || dist[i] < dist[u]) {
                u = i;
            }
        }
        if u == usize::MAX || u == 1 {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if done[v] || v == u {
                continue;
            }
            let d = dist[u] + nodes[u].distance(&nodes[v]);
            if d < dist[v] - GEOM_EPS && visible(&nodes[u], &nodes[v], zones) {
                dist[v] = d;
                prev[v] = u;
            }
        }
    }
    if !dist[1].is_finite() {
        return None;
    }
    let mut corners = Vec::new();
    let mut cur = prev[1];
    while cur != 0 {
        corners.push(nodes[cur]);
        cur = prev[cur];
    }
    corners.reverse();
    Some(corners)
}

/// Waypoints from `start` to `goal`: vertical climb to the leg altitude, level
/// flight around restricted zones, vertical descent.
pub fn plan_path(
    start: &Point3,
    goal: &Point3,
    zones: &[Polygon],
    margin: f64,
) -> Result<Vec<Point3>, TrajectoryError> {
    for (what, p) in [("start", start), ("goal", goal)] {
        if inside_any(&p.xy(), zones) {
            return Err(TrajectoryError::Unreachable(format!(
                "{what} ({:.1}, {:.1}) lies inside a restricted zone",
                p.x, p.y
            )));
        }
    }
    let corners = route_2d(start.xy(), goal.xy(), zones, margin).ok_or_else(|| {
        TrajectoryError::Unreachable(format!(
            "no zone-free route from ({:.1}, {:.1}) to ({:.1}, {:.1})",
            start.x, start.y, goal.x, goal.y
        ))
    })?;
    if corners.is_empty() {
        // straight leg: keep the climb/level/descend profile used for costing
        let alt = start.z.max(goal.z);
        let mut pts = vec![*start, start.xy().with_z(alt), goal.xy().with_z(alt), *goal];
        pts.dedup_by(|a, b| a.distance(b) < GEOM_EPS);
        return Ok(pts);
    }
    let alt = start.z.max(goal.z);
    let mut pts = vec![*start, start.xy().with_z(alt)];
    pts.extend(corners.iter().map(|c| c.with_z(alt)));
    pts.push(goal.xy().with_z(alt));
    pts.push(*goal);
    pts.dedup_by(|a, b| a.distance(b) < GEOM_EPS);
    Ok(pts)
}

/// Positions at the end of each slot while flying `path` at `speed`, ending
/// with the slot in which the goal is reached.
pub fn sample_path(path: &[Point3], speed: f64, slot_length: f64) -> Vec<Point3> {
    let len = polyline_length(path);
    let step = speed * slot_length;
    let slots = slots_to_cover(len, step);
    (1..=slots)
        .map(|k| {
            if k == slots {
                *path.last().expect("non-empty path")
            } else {
                point_along(path, k as f64 * step)
            }
        })
        .collect()
}

/// Whole slots needed to fly `len` metres at `step` metres per slot.
pub fn slots_to_cover(len: f64, step: f64) -> usize {
    if len <= GEOM_EPS {
        0
    } else {
        (len / step - 1e-9).ceil().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn level(x: f64, y: f64) -> Point3 {
        Point3::new(x, y, 50.0)
    }

    #[test]
    fn no_zones_is_straight() {
        let p = plan_path(&level(0.0, 0.0), &level(30.0, 40.0), &[], 5.0).unwrap();
        assert_eq!(p.len(), 2);
        assert!((polyline_length(&p) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn detours_around_centered_square() {
        let zone = Polygon::square(Point2::new(50.0, 0.0), 10.0);
        let p = plan_path(&level(0.0, 0.0), &level(100.0, 0.0), &[zone], 5.0).unwrap();
        // corners inflated to (35, ±15) and (65, ±15)
        let hand = 2.0 * (35.0f64 * 35.0 + 15.0 * 15.0).sqrt() + 30.0;
        assert!((polyline_length(&p) - hand).abs() < 1e-9, "{p:?}");
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn goal_in_zone_is_unreachable() {
        let zone = Polygon::square(Point2::new(50.0, 0.0), 10.0);
        let err = plan_path(&level(0.0, 0.0), &level(50.0, 0.0), &[zone], 5.0).unwrap_err();
        assert!(matches!(err, TrajectoryError::Unreachable(_)));
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        // four bars around the goal with no gap wider than the margin allows
        let bars = vec![
            Polygon::new(vec![Point2::new(-20.0, -20.0), Point2::new(20.0, -20.0), Point2::new(20.0, -15.0), Point2::new(-20.0, -15.0)]),
            Polygon::new(vec![Point2::new(-20.0, 15.0), Point2::new(20.0, 15.0), Point2::new(20.0, 20.0), Point2::new(-20.0, 20.0)]),
            Polygon::new(vec![Point2::new(-20.0, -20.0), Point2::new(-15.0, -20.0), Point2::new(-15.0, 20.0), Point2::new(-20.0, 20.0)]),
            Polygon::new(vec![Point2::new(15.0, -20.0), Point2::new(20.0, -20.0), Point2::new(20.0, 20.0), Point2::new(15.0, 20.0)]),
        ];
        let err = plan_path(&level(100.0, 0.0), &level(0.0, 0.0), &bars, 5.0).unwrap_err();
        assert!(matches!(err, TrajectoryError::Unreachable(_)));
    }

    #[test]
    fn climb_level_descend_profile() {
        let p = plan_path(&Point3::new(0.0, 0.0, 0.0), &level(100.0, 0.0), &[], 5.0).unwrap();
        assert_eq!(p, vec![Point3::new(0.0, 0.0, 0.0), level(0.0, 0.0), level(100.0, 0.0)]);
    }

    #[test]
    fn sampling_arrives_in_the_expected_slot() {
        let path = [level(0.0, 0.0), level(100.0, 0.0)];
        let s = sample_path(&path, 10.0, 3.0);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], level(30.0, 0.0));
        assert_eq!(*s.last().unwrap(), level(100.0, 0.0));
        assert_eq!(sample_path(&path[..1], 10.0, 3.0).len(), 0);
        assert_eq!(slots_to_cover(90.0, 30.0), 3);
    }

    proptest! {
        #[test]
        fn detour_stays_zone_free_and_bounded(
            cx in 20.0f64..80.0, cy in -30.0f64..30.0, half in 2.0f64..15.0,
            speed in 1.0f64..20.0, dt in 0.5f64..10.0,
        ) {
            let zone = Polygon::square(Point2::new(cx, cy), half);
            let a = level(0.0, 0.0);
            let b = level(100.0, 0.0);
            let p = plan_path(&a, &b, std::slice::from_ref(&zone), 2.0).unwrap();
            for w in p.windows(2) {
                prop_assert!(!zone.blocks_segment(&w[0].xy(), &w[1].xy()));
            }
            let straight = a.distance(&b);
            let len = polyline_length(&p);
            prop_assert!(len >= straight - 1e-9);
            if !zone.blocks_segment(&a.xy(), &b.xy()) {
                prop_assert!((len - straight).abs() < 1e-9);
            } else {
                // going around the inflated square costs at most its half perimeter
                prop_assert!(len <= straight + 4.0 * (half + 2.0) + 1e-9);
            }
            let samples = sample_path(&p, speed, dt);
            let mut prev = a;
            for s in samples {
                prop_assert!(prev.distance(&s) <= speed * dt + 1e-9);
                prev = s;
            }
            prop_assert_eq!(prev, b);
        }
    }
}
