use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::geometry::{Point2, Rigid2};
use crate::ingest::{DirectionClass, TrackId, TrackPoint};
use crate::mcmc::chain_rng;
use crate::topology::{Arm, LaneRef, TopologyModel};

fn cfg() -> LaneCourseConfig {
    LaneCourseConfig::default()
}

fn cross(gap: f64, n_in: usize, n_out: usize) -> TopologyModel {
    TopologyModel {
        center: Point2::ORIGIN,
        arms: (0..4)
            .map(|k| Arm::new(k as f64 * FRAC_PI_2, gap, n_in, n_out, 3.5))
            .collect(),
    }
}

fn lane(arm: usize, direction: DirectionClass, index: usize) -> LaneRef {
    LaneRef {
        arm,
        direction,
        index,
    }
}

/// Points every `step` meters along the polyline through `waypoints`.
fn track(id: &str, waypoints: &[Point2], step: f64) -> Trajectory {
    let mut pts = vec![waypoints[0]];
    let mut carry = 0.0;
    for w in waypoints.windows(2) {
        let len = w[0].distance(w[1]);
        let mut s = step - carry;
        while s <= len {
            pts.push(w[0].lerp(w[1], s / len));
            s += step;
        }
        carry = len - (s - step);
    }
    let points = pts
        .into_iter()
        .enumerate()
        .map(|(i, p)| TrackPoint::new(p, i as f64 * 0.2))
        .collect();
    Trajectory::new(TrackId::from(id), points).unwrap()
}

fn p(x: f64, y: f64) -> Point2 {
    Point2::new(x, y)
}

/// Straight-through traffic on every entering lane of the unit-gap cross.
fn straight_tracks(reach: f64) -> Vec<Trajectory> {
    vec![
        track("w", &[p(reach, 2.25), p(-reach, 2.25)], 2.0),
        track("e", &[p(-reach, -2.25), p(reach, -2.25)], 2.0),
        track("s", &[p(-2.25, reach), p(-2.25, -reach)], 2.0),
        track("n", &[p(2.25, -reach), p(2.25, reach)], 2.0),
    ]
}

fn oracle_segment_distance(q: Point2, a: Point2, b: Point2) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q.x - a.x) * vx + (q.y - a.y) * vy) / len2).clamp(0.0, 1.0)
    };
    ((q.x - a.x - t * vx).powi(2) + (q.y - a.y - t * vy).powi(2)).sqrt()
}

fn oracle_ln_pdf(x: f64, s: f64) -> f64 {
    -(x * x) / (2.0 * s * s) - (s * (2.0 * PI).sqrt()).ln()
}

fn oracle_ll(t: &Trajectory, model: &LaneletModel, c: &LaneCourseConfig) -> f64 {
    let line: Vec<Point2> = model.assignments[t.id()]
        .iter()
        .flat_map(|&l| model.lanelet(l).center.points.clone())
        .collect();
    t.positions()
        .map(|q| {
            let d = line
                .windows(2)
                .map(|w| oracle_segment_distance(q, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            oracle_ln_pdf(d, c.sigma_perp)
        })
        .sum()
}

fn oracle_delta(pts: &[Point2]) -> f64 {
    let mut total = 0.0;
    for w in pts.windows(3) {
        let (a, b) = (w[1] - w[0], w[2] - w[1]);
        let cos = (a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())).clamp(-1.0, 1.0);
        total += cos.acos();
    }
    total
}

fn prepared(topology: &TopologyModel, tracks: &[Trajectory]) -> PreparedCourse {
    prepare_lane_course(topology, tracks, &cfg()).unwrap()
}

// ---------------------------------------------------------------- center line

#[test]
fn rectangular_lanelet_center_line_lies_on_the_axis() {
    let left = [p(0.0, 1.0), p(2.0, 1.0), p(4.0, 1.0)];
    let right = [p(0.0, -1.0), p(2.0, -1.0), p(4.0, -1.0)];
    let kind = LaneletKind::Lane(lane(0, DirectionClass::Leaving, 0));
    let l = Lanelet::from_borders(0, kind, &left, &right);
    let c = compute_center_line(&l);
    assert_eq!(c.points.len(), 5);
    for (k, q) in c.points.iter().enumerate() {
        assert_eq!(*q, p(k as f64, 0.0));
    }
    let two = Lanelet::from_borders(0, kind, &left[..2], &right[..2]);
    assert_eq!(compute_center_line(&two).points.len(), 3);
}

#[test]
fn trapezoidal_lanelet_center_points_are_averages() {
    let kind = LaneletKind::Lane(lane(0, DirectionClass::Leaving, 0));
    let left = [p(0.0, 2.0), p(4.0, 1.0)];
    let right = [p(0.0, -2.0), p(4.0, -1.0)];
    let c = compute_center_line(&Lanelet::from_borders(0, kind, &left, &right));
    // (0+0)/2, (2-2)/2 | (4+4)/2, (1-1)/2 | midpoint of both
    assert_eq!(c.points, vec![p(0.0, 0.0), p(2.0, 0.0), p(4.0, 0.0)]);
    let left = [p(0.0, 3.0), p(6.0, 1.0)];
    let right = [p(1.0, -1.0), p(5.0, -2.0)];
    let c = compute_center_line(&Lanelet::from_borders(0, kind, &left, &right));
    assert_eq!(c.points, vec![p(0.5, 1.0), p(3.0, 0.25), p(5.5, -0.5)]);
}

// ---------------------------------------------------------------- assignment

#[test]
fn part_on_a_lane_ray_is_assigned_to_that_lane() {
    let topo = cross(1.0, 1, 1);
    let parts = assign_parts(&topo, &straight_tracks(90.0), &cfg());
    assert_eq!(parts.len(), 4);
    let w = parts.iter().find(|a| a.id == TrackId::from("w")).unwrap();
    assert_eq!(w.incoming, lane(0, DirectionClass::Entering, 0));
    assert_eq!(w.outgoing, lane(2, DirectionClass::Leaving, 0));
    let n = parts.iter().find(|a| a.id == TrackId::from("n")).unwrap();
    assert_eq!(n.incoming, lane(3, DirectionClass::Entering, 0));
    assert_eq!(n.outgoing, lane(1, DirectionClass::Leaving, 0));
}

#[test]
fn equidistant_point_goes_to_the_lower_lane_index() {
    let topo = cross(0.0, 2, 1);
    // arm 0 entering lanes sit at y = 1.75 and y = 5.25
    let got = nearest_lane(&topo, p(50.0, 3.5), DirectionClass::Entering, 100.0);
    assert_eq!(got, Some(lane(0, DirectionClass::Entering, 0)));
}

#[test]
fn u_turns_and_tracks_missing_the_center_are_not_assigned() {
    let topo = cross(1.0, 1, 1);
    let u = track("u", &[p(90.0, 2.25), p(3.0, 2.25), p(3.0, -2.25), p(90.0, -2.25)], 2.0);
    let parts = assign_parts(&topo, &[u], &cfg());
    assert!(parts.is_empty());
}

#[test]
fn assignment_matches_nearest_ray_brute_force() {
    let mut topo = cross(1.0, 2, 2);
    topo.arms[1].heading = 1.3;
    let mut rng = chain_rng(11);
    let mut tracks = Vec::new();
    for k in 0..20 {
        let a = rng.random_range(0..4);
        let b = (a + rng.random_range(1..4)) % 4;
        let ha = topo.arms[a].heading;
        let hb = topo.arms[b].heading;
        let (ua, ub) = (p(ha.cos(), ha.sin()), p(hb.cos(), hb.sin()));
        let (oa, ob) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let na = p(-ua.y, ua.x) * oa;
        let nb = p(-ub.y, ub.x) * ob;
        tracks.push(track(
            &format!("t{k}"),
            &[ua * 80.0 + na, ua * 10.0 + na, ub * 10.0 + nb, ub * 80.0 + nb],
            2.0,
        ));
    }
    let parts = assign_parts(&topo, &tracks, &cfg());
    let rays = topo.lane_rays(100.0);
    let brute = |q: Point2, dir: DirectionClass| -> LaneRef {
        let mut best = (f64::INFINITY, None);
        for r in &rays {
            if r.lane.direction != dir {
                continue;
            }
            let pts = r.line.points();
            let d = oracle_segment_distance(q, pts[0], pts[1]);
            if d < best.0 {
                best = (d, Some(r.lane));
            }
        }
        best.1.unwrap()
    };
    let mut checked = 0;
    for t in &tracks {
        let split = crate::ingest::split_trajectory(t, topo.center);
        let inc = brute(split.incoming.mean_position().unwrap(), DirectionClass::Entering);
        let out = brute(split.outgoing.mean_position().unwrap(), DirectionClass::Leaving);
        match parts.iter().find(|a| a.id == *t.id()) {
            Some(a) => {
                assert_eq!((a.incoming, a.outgoing), (inc, out));
                checked += 1;
            }
            None => assert_eq!(inc.arm, out.arm),
        }
    }
    assert!(checked >= 15, "only {checked} tracks assigned");
}

// ------------------------------------------------------------ initialization

#[test]
fn lone_lane_borders_run_parallel_at_half_width() {
    let topo = TopologyModel {
        center: Point2::ORIGIN,
        arms: vec![Arm::new(0.0, 1.0, 0, 1, 3.5)],
    };
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    assert_eq!(m.lanelets.len(), 1);
    let l = m.lanelet(0);
    assert_eq!(l.pairs(), 51);
    for k in 0..l.pairs() {
        let (a, b) = (l.left[k].position, l.right[k].position);
        assert!((a.y + 0.5).abs() < 1e-9 && (b.y + 4.0).abs() < 1e-9, "{a:?} {b:?}");
        assert!((a.x - b.x).abs() < 1e-9);
        let c = l.center.points[2 * k];
        assert!((c.y + 2.25).abs() < 1e-9);
    }
    assert!(l.borders_oriented());
    m.check().unwrap();
}

#[test]
fn straight_through_connection_is_collinear_with_its_lanes() {
    let topo = cross(1.0, 1, 1);
    let tracks = straight_tracks(90.0);
    let parts = assign_parts(&topo, &tracks, &cfg());
    let m = initialize_lanelets(&topo, &parts, &cfg()).unwrap();
    m.check().unwrap();
    assert_eq!(m.lanelets.len(), 8 + 4);
    let path = &m.assignments[&TrackId::from("w")];
    assert_eq!(path.len(), 3);
    for &l in path {
        for c in &m.lanelet(l).center.points {
            assert!((c.y - 2.25).abs() < 1e-9, "{c:?}");
        }
        assert!(m.lanelet(l).borders_oriented());
    }
    let conn = m.lanelet(path[1]);
    assert!(conn.is_connection());
    assert!((conn.center.points[0].x - 5.0).abs() < 1e-9);
    assert!((conn.center.points.last().unwrap().x + 5.0).abs() < 1e-9);
}

#[test]
fn turn_connection_is_a_straight_chord_between_mouths() {
    let topo = cross(1.0, 1, 1);
    // east entering, turning left to the south arm
    let t = track("l", &[p(90.0, 2.25), p(-2.25, 2.25), p(-2.25, -90.0)], 2.0);
    let parts = assign_parts(&topo, &[t], &cfg());
    assert_eq!(parts[0].outgoing, lane(3, DirectionClass::Leaving, 0));
    let m = initialize_lanelets(&topo, &parts, &cfg()).unwrap();
    let path = &m.assignments[&TrackId::from("l")];
    let conn = m.lanelet(path[1]);
    let (a, b) = (p(5.0, 2.25), p(-2.25, -5.0));
    assert!(conn.center.points[0].distance(a) < 1e-9);
    assert!(conn.center.points.last().unwrap().distance(b) < 1e-9);
    for c in &conn.center.points {
        let cross = (b - a).cross(*c - a);
        assert!(cross.abs() < 1e-9);
    }
}

#[test]
fn removed_lane_in_an_assignment_is_an_error() {
    let topo = cross(1.0, 1, 1);
    let bad = PartAssignment {
        id: TrackId::from("x"),
        incoming: lane(0, DirectionClass::Entering, 3),
        outgoing: lane(2, DirectionClass::Leaving, 0),
    };
    assert!(matches!(
        initialize_lanelets(&topo, &[bad], &cfg()),
        Err(crate::Error::Lanelet(_))
    ));
}

#[test]
fn coincident_lane_borders_start_shared() {
    let topo = cross(0.0, 2, 1);
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    m.check().unwrap();
    // per arm: E0/E1 and E0/L0 borders coincide at each of 51 stations
    assert_eq!(m.shared_pair_count(), 4 * 2 * 51);
}

// ---------------------------------------------------------------- refinement

#[test]
fn refinement_keeps_a_model_fitted_by_its_data() {
    let topo = cross(1.0, 1, 1);
    let tracks = straight_tracks(110.0);
    let parts = assign_parts(&topo, &tracks, &cfg());
    let m = initialize_lanelets(&topo, &parts, &cfg()).unwrap();
    let r = refine_initial(&m, &tracks, &cfg());
    for (a, b) in m.lanelets.iter().zip(&r.lanelets) {
        for (x, y) in a.center.points.iter().zip(&b.center.points) {
            assert!(x.distance(*y) < 1e-9);
        }
    }
    assert_eq!(r.shared_pair_count(), m.shared_pair_count());
}

#[test]
fn constant_offset_moves_covered_center_points_by_that_offset() {
    let topo = cross(1.0, 1, 1);
    // 0.5 m to the left of westward travel
    let t = track("w", &[p(91.0, 1.75), p(-91.0, 1.75)], 2.0);
    let parts = assign_parts(&topo, std::slice::from_ref(&t), &cfg());
    let m = initialize_lanelets(&topo, &parts, &cfg()).unwrap();
    let r = refine_initial(&m, std::slice::from_ref(&t), &cfg());
    r.check().unwrap();
    let li = m.lane_lanelet(lane(0, DirectionClass::Entering, 0)).unwrap();
    let l = r.lanelet(li);
    for q in &l.center.points {
        if q.x <= 91.0 {
            assert!((q.y - 1.75).abs() < 1e-9, "{q:?}");
        } else if q.x >= 94.0 {
            assert!((q.y - 2.25).abs() < 1e-9, "{q:?}");
        }
    }
    for k in 0..l.pairs() {
        assert!((l.left[k].position.distance(l.right[k].position) - 3.5).abs() < 1e-9);
    }
}

#[test]
fn refinement_moves_to_the_window_mean() {
    let topo = cross(1.0, 1, 1);
    let wobble = |x: f64| 0.6 * (x * 0.37).sin();
    let mk = |id: &str, shift: f64| {
        let pts: Vec<TrackPoint> = (0..92)
            .map(|k| {
                let x = 91.5 - 2.0 * k as f64;
                TrackPoint::new(p(x, 2.25 + shift + wobble(x)), k as f64)
            })
            .collect();
        Trajectory::new(TrackId::from(id), pts).unwrap()
    };
    let tracks = vec![mk("a", 0.2), mk("b", -0.3)];
    let parts = assign_parts(&topo, &tracks, &cfg());
    let m = initialize_lanelets(&topo, &parts, &cfg()).unwrap();
    let r = refine_initial(&m, &tracks, &cfg());
    let li = m.lane_lanelet(lane(0, DirectionClass::Entering, 0)).unwrap();
    let (before, after) = (m.lanelet(li), r.lanelet(li));
    // The lane runs west from x = 105 to x = 5 along y = 2.25: arc = 105 - x,
    // left of travel is -y.
    let data: Vec<(f64, f64)> = tracks
        .iter()
        .flat_map(|t| t.positions())
        .filter(|q| q.x > 5.0 && q.x < 105.0)
        .map(|q| (105.0 - q.x, 2.25 - q.y))
        .collect();
    for (c0, c1) in before.center.points.iter().zip(&after.center.points) {
        let s = 105.0 - c0.x;
        let near: Vec<f64> = data
            .iter()
            .filter(|(a, _)| (a - s).abs() <= 2.0)
            .map(|(_, o)| *o)
            .collect();
        let expect = if near.is_empty() {
            0.0
        } else {
            near.iter().sum::<f64>() / near.len() as f64
        };
        assert!((c0.y - c1.y - expect).abs() < 1e-9, "at x {}: {} vs {expect}", c0.x, c0.y - c1.y);
        assert!((c0.x - c1.x).abs() < 1e-9);
    }
}

// ----------------------------------------------------------- merge candidates

#[test]
fn shared_borders_yield_no_candidates() {
    let topo = cross(0.0, 2, 1);
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    assert!(merge_candidates(&m, &cfg()).is_empty());
}

#[test]
fn borders_half_a_meter_apart_are_candidates() {
    let topo = cross(0.5, 1, 1);
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    let c = merge_candidates(&m, &cfg());
    let e0 = m.lane_lanelet(lane(0, DirectionClass::Entering, 0)).unwrap();
    let l0 = m.lane_lanelet(lane(0, DirectionClass::Leaving, 0)).unwrap();
    let n = m.lanelet(e0).pairs();
    // entering borders are stored inward, so station k of one is n-1-k of the other
    let want = (
        BorderRef {
            lanelet: e0,
            side: Side::Left,
            index: n - 1,
        },
        BorderRef {
            lanelet: l0,
            side: Side::Left,
            index: 0,
        },
    );
    assert!(c.contains(&want));
    assert_eq!(c.len(), 4 * 51);
}

#[test]
fn candidates_equal_brute_force_filter() {
    let topo = cross(0.8, 2, 2);
    let tracks = vec![
        track("a", &[p(90.0, 2.3), p(-90.0, 2.3)], 2.0),
        track("b", &[p(90.0, 5.5), p(-90.0, 5.5)], 2.0),
        track("c", &[p(90.0, 4.0), p(-2.0, 4.0), p(-2.0, -90.0)], 2.0),
    ];
    let m = prepared(&topo, &tracks).model;
    let c = cfg();
    let got: BTreeSet<(BorderRef, BorderRef)> = merge_candidates(&m, &c).into_iter().collect();
    let group = |l: &Lanelet| match l.kind {
        LaneletKind::Lane(r) => (0, r.arm, 0),
        LaneletKind::Connection { from, to } => (1, from.arm, to.arm),
    };
    let mut want = BTreeSet::new();
    let refs: Vec<BorderRef> = m
        .lanelets
        .iter()
        .enumerate()
        .flat_map(|(li, l)| {
            [Side::Left, Side::Right].into_iter().flat_map(move |side| {
                (0..l.pairs()).map(move |index| BorderRef {
                    lanelet: li,
                    side,
                    index,
                })
            })
        })
        .collect();
    for &a in &refs {
        for &b in &refs {
            let (la, lb) = (m.lanelet(a.lanelet), m.lanelet(b.lanelet));
            let end = |l: &Lanelet, i: usize| l.is_connection() && (i == 0 || i + 1 == l.pairs());
            if a.lanelet < b.lanelet
                && group(la) == group(lb)
                && m.point(a).shared_with.is_none()
                && m.point(b).shared_with.is_none()
                && !end(la, a.index)
                && !end(lb, b.index)
                && m.point(a).position.distance(m.point(b).position) <= c.merge_radius
            {
                want.insert((a, b));
            }
        }
    }
    assert!(!want.is_empty());
    assert_eq!(got, want);
}

// ---------------------------------------------------------------- proposals

fn busy_model() -> PreparedCourse {
    let topo = cross(0.5, 2, 1);
    let tracks = vec![
        track("a", &[p(90.0, 2.0), p(-90.0, 2.0)], 2.0),
        track("b", &[p(90.0, 5.5), p(5.5, 5.5), p(5.5, 90.0)], 2.0),
        track("c", &[p(-90.0, -2.0), p(90.0, -2.0)], 2.0),
    ];
    prepared(&topo, &tracks)
}

#[test]
fn move_split_and_merge_are_equally_frequent() {
    let pc = busy_model();
    assert!(pc.model.shared_pair_count() > 0 && !pc.candidates.is_empty());
    let mut rng = chain_rng(5);
    let mut counts = [0usize; 3];
    let n = 100_000;
    for _ in 0..n {
        let (_, kind, _) = propose_course(&pc.model, &pc.candidates, &cfg(), &mut rng);
        counts[kind as usize] += 1;
    }
    for c in counts {
        let f = c as f64 / n as f64;
        assert!((f - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn merge_keeps_either_position_with_equal_odds() {
    let pc = busy_model();
    let (a, b) = pc.candidates[0];
    let (pa, pb) = (pc.model.point(a).position, pc.model.point(b).position);
    let mut rng = chain_rng(9);
    let mut from_a = 0;
    let n = 20_000;
    for _ in 0..n {
        let mv = sample_course_move(CourseMoveKind::Merge, &pc.model, &pc.candidates[..1], &cfg(), &mut rng)
            .unwrap();
        let mut m = pc.model.clone();
        apply_course_move(&mut m, &mv).unwrap();
        let q = m.point(a).position;
        assert_eq!(q, m.point(b).position);
        assert!(q == pa || q == pb);
        if q == pa {
            from_a += 1;
        }
    }
    let f = from_a as f64 / n as f64;
    assert!((f - 0.5).abs() < 0.015, "{f}");
}

#[test]
fn split_then_merge_restores_sharing() {
    let pc = busy_model();
    let (a, b) = pc.model.shared_pairs()[0];
    let mut m = pc.model.clone();
    let split = CourseMove::Split {
        moved: b,
        displacement: p(0.3, 0.0),
    };
    apply_course_move(&mut m, &split).unwrap();
    assert!(m.point(a).shared_with.is_none());
    assert_eq!(m.shared_pair_count(), pc.model.shared_pair_count() - 1);
    let merge = CourseMove::Merge {
        anchor: a,
        moved: b,
    };
    apply_course_move(&mut m, &merge).unwrap();
    assert_eq!(m.point(a).shared_with, Some(b));
    assert_eq!(m.shared_pair_count(), pc.model.shared_pair_count());
    m.check().unwrap();
}

#[test]
fn ineligible_proposals_leave_the_model_unchanged() {
    let topo = cross(3.0, 1, 1);
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    let candidates = merge_candidates(&m, &cfg());
    assert_eq!(m.shared_pair_count(), 0);
    assert!(candidates.is_empty());
    let mut rng = chain_rng(1);
    for kind in [CourseMoveKind::Split, CourseMoveKind::Merge] {
        assert!(sample_course_move(kind, &m, &candidates, &cfg(), &mut rng).is_none());
    }
    for _ in 0..100 {
        let (next, kind, changes) = propose_course(&m, &candidates, &cfg(), &mut rng);
        if kind != CourseMoveKind::Move {
            assert!(changes.is_empty());
            assert_eq!(next, m);
        }
    }
}

#[test]
fn long_proposal_runs_keep_every_invariant() {
    let pc = busy_model();
    let mut m = pc.model.clone();
    let mut rng = chain_rng(21);
    let oriented: Vec<bool> = m.lanelets.iter().map(|l| l.borders_oriented()).collect();
    for step in 0..100_000 {
        m = propose_course(&m, &pc.candidates, &cfg(), &mut rng).0;
        if step % 5_000 == 0 {
            m.check().unwrap();
        }
    }
    m.check().unwrap();
    for (l, was) in m.lanelets.iter().zip(oriented) {
        assert_eq!(l.left.len(), l.right.len());
        if was {
            assert!(l.borders_oriented(), "lanelet {} flipped", l.id);
        }
    }
    assert_eq!(m.assignments, pc.model.assignments);
}

// ---------------------------------------------------------------- smoothness

#[test]
fn smoothness_of_simple_shapes() {
    let line = CenterLine {
        points: vec![p(0.0, 0.0), p(1.0, 0.0), p(2.5, 0.0), p(4.0, 0.0)],
    };
    assert_eq!(smoothness_delta(&line), 0.0);
    let bend = CenterLine {
        points: vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)],
    };
    assert!((smoothness_delta(&bend) - FRAC_PI_2).abs() < 1e-12);
    let two = CenterLine {
        points: vec![p(0.0, 0.0), p(1.0, 0.0)],
    };
    assert_eq!(smoothness_delta(&two), 0.0);
}

#[test]
fn quarter_arc_of_ten_points_turns_a_right_angle() {
    let pts: Vec<Point2> = (0..10)
        .map(|k| {
            let a = FRAC_PI_2 * k as f64 / 9.0;
            p(a.cos(), a.sin()) * 20.0
        })
        .collect();
    let d = points_delta(&pts);
    assert!((d - oracle_delta(&pts)).abs() < 1e-12);
    // ten points span nine chords, hence eight interior turns of 10 degrees
    assert!((d - 8.0 * 10f64.to_radians()).abs() < 1e-9, "{d}");
}

proptest! {
    #[test]
    fn smoothness_ignores_rigid_motion_and_scale(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..12),
        rot in -PI..PI,
        tx in -100.0..100.0f64,
        ty in -100.0..100.0f64,
        scale in 0.1..10.0f64,
    ) {
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| p(x, y)).collect();
        prop_assume!(pts.windows(2).all(|w| w[0].distance(w[1]) > 1e-3));
        let t = Rigid2::new(rot, p(tx, ty));
        let moved: Vec<Point2> = pts.iter().map(|&q| t.apply(q * scale)).collect();
        let (a, b) = (points_delta(&pts), points_delta(&moved));
        prop_assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
        prop_assert!((a - oracle_delta(&pts)).abs() < 1e-7);
    }
}

// ---------------------------------------------------------------- prior

#[test]
fn straight_unshared_model_has_the_maximal_prior() {
    let topo = cross(3.0, 1, 1);
    let m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    let c = cfg();
    let want = m.lanelets.len() as f64 * oracle_ln_pdf(0.0, c.sigma_smooth);
    assert!((log_prior_course(&m, &c) - want).abs() < 1e-9);
}

#[test]
fn one_shared_pair_adds_tau_ln_two() {
    let topo = cross(0.5, 1, 1);
    let mut m = initialize_lanelets(&topo, &[], &cfg()).unwrap();
    let mut c = cfg();
    c.tau = 1.7;
    let before = log_prior_course(&m, &c);
    let (a, b) = merge_candidates(&m, &c)[0];
    apply_course_move(&mut m, &CourseMove::Merge { anchor: a, moved: b }).unwrap();
    let delta_smooth: f64 = m
        .lanelets
        .iter()
        .map(|l| oracle_ln_pdf(oracle_delta(&l.center.points), c.sigma_smooth))
        .sum::<f64>()
        - (m.lanelets.len() as f64 * oracle_ln_pdf(0.0, c.sigma_smooth));
    let gain = log_prior_course(&m, &c) - before - delta_smooth;
    assert!((gain - 1.7 * 2f64.ln()).abs() < 1e-9, "{gain}");
}

#[test]
fn prior_of_a_mixed_model_matches_its_definition() {
    let pc = busy_model();
    let mut m = pc.model.clone();
    let mut rng = chain_rng(3);
    for _ in 0..2_000 {
        m = propose_course(&m, &pc.candidates, &cfg(), &mut rng).0;
    }
    let c = cfg();
    let shared = {
        let mut n = 0;
        for l in &m.lanelets {
            n += l.left.iter().chain(&l.right).filter(|b| b.shared_with.is_some()).count();
        }
        n / 2
    };
    let want = c.tau * (1.0 + shared as f64).ln()
        + m.lanelets
            .iter()
            .map(|l| oracle_ln_pdf(oracle_delta(&l.center.points), c.sigma_smooth))
            .sum::<f64>();
    assert!((log_prior_course(&m, &c) - want).abs() < 1e-6);
}

// ---------------------------------------------------------------- likelihood

#[test]
fn trajectory_on_its_center_line_scores_the_mode() {
    let topo = cross(1.0, 1, 1);
    let tracks = straight_tracks(90.0);
    let pc = prepared(&topo, &tracks);
    let t = &tracks[0];
    let ll = log_likelihood_trajectory(t, &pc.model, &cfg()).unwrap();
    let want = t.points().len() as f64 * oracle_ln_pdf(0.0, 1.0);
    assert!((ll - want).abs() < 1e-9);
}

#[test]
fn one_meter_offset_scores_the_unit_deviation() {
    let topo = cross(1.0, 1, 1);
    let tracks = straight_tracks(90.0);
    let pc = prepared(&topo, &tracks);
    let t = tracks[0].with_positions(tracks[0].positions().map(|q| q + p(0.0, 1.0)));
    let ll = log_likelihood_trajectory(&t, &pc.model, &cfg()).unwrap();
    let want = t.points().len() as f64 * oracle_ln_pdf(1.0, 1.0);
    assert!((ll - want).abs() < 1e-9);
}

#[test]
fn unassigned_trajectory_is_an_error() {
    let topo = cross(1.0, 1, 1);
    let pc = prepared(&topo, &straight_tracks(90.0));
    let t = track("ghost", &[p(0.0, 0.0), p(1.0, 0.0)], 1.0);
    assert!(matches!(
        log_likelihood_trajectory(&t, &pc.model, &cfg()),
        Err(crate::Error::Unassigned(_))
    ));
}

#[test]
fn likelihood_matches_pointwise_oracle_on_a_disturbed_model() {
    let pc = busy_model();
    let mut m = pc.model.clone();
    let mut rng = chain_rng(8);
    for _ in 0..3_000 {
        m = propose_course(&m, &pc.candidates, &cfg(), &mut rng).0;
    }
    let noisy: Vec<Trajectory> = [
        track("a", &[p(90.0, 2.0), p(-90.0, 2.0)], 2.0),
        track("b", &[p(90.0, 5.5), p(5.5, 5.5), p(5.5, 90.0)], 2.0),
    ]
    .iter()
    .map(|t| {
        t.with_positions(
            t.positions()
                .map(|q| q + p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
        )
    })
    .collect();
    for t in &noisy {
        let ll = log_likelihood_trajectory(t, &m, &cfg()).unwrap();
        let want = oracle_ll(t, &m, &cfg());
        assert!((ll - want).abs() < 1e-6 * want.abs().max(1.0), "{ll} vs {want}");
    }
}

// ------------------------------------------------------------ cached state

#[test]
fn cached_posterior_tracks_full_recomputation() {
    let topo = cross(0.5, 2, 1);
    let tracks = vec![
        track("a", &[p(90.0, 2.0), p(-90.0, 2.0)], 2.0),
        track("b", &[p(90.0, 5.5), p(5.5, 5.5), p(5.5, 90.0)], 2.0),
        track("c", &[p(-90.0, -2.0), p(90.0, -2.0)], 2.0),
        track("d", &[p(-2.0, 90.0), p(-2.0, 2.0), p(-90.0, 2.0)], 2.0),
    ];
    let c = LaneCourseConfig {
        move_sigma: 1.0,
        ..cfg()
    };
    let pc = prepare_lane_course(&topo, &tracks, &c).unwrap();
    let mut s = CourseState::new(pc.model, &tracks, pc.candidates, &c).unwrap();
    let mut rng = chain_rng(13);
    for step in 0..4_000 {
        s = s.propose(&mut rng);
        if step % 7 == 0 {
            let full = log_posterior_course(s.model(), &tracks, &c);
            let cached = s.log_posterior();
            assert!((full - cached).abs() < 1e-7 * full.abs(), "step {step}: {full} vs {cached}");
        }
    }
}

// ---------------------------------------------------------------- estimation

fn deviation_from_truth(m: &LaneletModel) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for l in &m.lanelets {
        let LaneletKind::Lane(r) = l.kind else { continue };
        let sign = if r.direction == DirectionClass::Entering { 1.0 } else { -1.0 };
        for q in &l.center.points {
            // true centers sit 2.25 m off each axis
            let d = match r.arm {
                0 => q.y - 2.25 * sign,
                1 => q.x + 2.25 * sign,
                2 => q.y + 2.25 * sign,
                _ => q.x - 2.25 * sign,
            };
            total += d.abs();
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn noiseless_straight_lanes_are_recovered_to_two_centimeters() {
    // the topology misplaces every lane by 0.3 m
    let topo = cross(1.6, 1, 1);
    let tracks = straight_tracks(115.0);
    let before = topo.clone();
    let c = cfg();
    let pc = prepare_lane_course(&topo, &tracks, &c).unwrap();
    let init_lp = log_posterior_course(&pc.model, &tracks, &c);
    let result = estimate_lane_course(&topo, &tracks, &c, 4).unwrap();
    assert_eq!(topo, before);
    assert!(result.best_log_posterior >= init_lp);
    let dev = deviation_from_truth(&result.best_state);
    assert!(dev <= 0.02, "mean deviation {dev}");
    result.best_state.check().unwrap();
}

#[test]
fn estimation_needs_trajectories() {
    let topo = cross(1.0, 1, 1);
    assert!(estimate_lane_course(&topo, &[], &cfg(), 0).is_err());
}

#[test]
fn config_round_trips_and_rejects_nonpositive_values() {
    let c = cfg();
    let s = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<LaneCourseConfig>(&s).unwrap(), c);
    let partial: LaneCourseConfig = serde_json::from_str(r#"{"tau": 2.0}"#).unwrap();
    assert_eq!(partial.tau, 2.0);
    assert_eq!(partial.split_max, 0.6);
    let bad = LaneCourseConfig {
        move_sigma: 0.0,
        ..cfg()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn model_serializes_with_shared_references() {
    let pc = busy_model();
    let json = serde_json::to_string(&pc.model).unwrap();
    let back: LaneletModel = serde_json::from_str(&json).unwrap();
    assert_eq!(back, pc.model);
    back.check().unwrap();
}

