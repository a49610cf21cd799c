use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{points_distance, project_on_points, Point2, Polyline};
use crate::ingest::{split_trajectory, DirectionClass, TrackId, TrackPart, Trajectory};
use crate::topology::{LaneRef, TopologyModel};

use super::model::{BorderRef, Lanelet, LaneletKind, LaneletModel, Side};
use super::LaneCourseConfig;

/// Where the two halves of one trajectory were attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartAssignment {
    pub id: TrackId,
    pub incoming: LaneRef,
    pub outgoing: LaneRef,
}

/// Lane of the given direction whose center ray is closest to `p`; ties go
/// to the lane listed first.
pub fn nearest_lane(
    topology: &TopologyModel,
    p: Point2,
    direction: DirectionClass,
    ray_length: f64,
) -> Option<LaneRef> {
    let mut best: Option<(LaneRef, f64)> = None;
    for ray in topology.lane_rays(ray_length) {
        if ray.lane.direction != direction {
            continue;
        }
        let d = ray.line.orthogonal_distance(p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((ray.lane, d));
        }
    }
    best.map(|(l, _)| l)
}

fn part_lane(
    topology: &TopologyModel,
    part: &TrackPart,
    direction: DirectionClass,
    ray_length: f64,
) -> Option<LaneRef> {
    nearest_lane(topology, part.mean_position()?, direction, ray_length)
}

/// Splits every trajectory at the topology center and attaches each half
/// to its nearest lane of matching direction. Tracks that do not pass the
/// center, or leave on the arm they came from, are left out.
pub fn assign_parts(
    topology: &TopologyModel,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
) -> Vec<PartAssignment> {
    trajectories
        .iter()
        .filter_map(|t| {
            let split = split_trajectory(t, topology.center);
            let incoming = part_lane(
                topology,
                &split.incoming,
                DirectionClass::Entering,
                cfg.lane_length,
            )?;
            let outgoing = part_lane(
                topology,
                &split.outgoing,
                DirectionClass::Leaving,
                cfg.lane_length,
            )?;
            (incoming.arm != outgoing.arm).then(|| PartAssignment {
                id: t.id().clone(),
                incoming,
                outgoing,
            })
        })
        .collect()
}

/// Left and right border support points of a lane, `spacing` apart over
/// `length` meters from the arm mouth, ordered in travel direction.
pub fn lane_borders(
    topology: &TopologyModel,
    lane: LaneRef,
    spacing: f64,
    length: f64,
) -> Result<(Vec<Point2>, Vec<Point2>)> {
    let arm = &topology.arms[lane.arm];
    let u = arm.axis().as_vector();
    let r = arm.axis().right_normal().as_vector();
    let offset = arm.lateral_offset(lane.direction, lane.index);
    let width = arm.lanes(lane.direction)[lane.index].width;
    let mouth = topology.center + u * topology.mouth_distance(lane.arm) + r * offset;
    let axis = Polyline::new(vec![mouth, mouth + u * length])?;
    let stations = crate::geometry::resample_equidistant(&axis, spacing)?;
    // Outward, the right normal r is on the right of a leaving vehicle.
    let outer = |s: f64| -> Vec<Point2> {
        stations
            .points()
            .iter()
            .map(|&c| c + r * (s * width / 2.0))
            .collect()
    };
    Ok(match lane.direction {
        DirectionClass::Leaving => (outer(-1.0), outer(1.0)),
        DirectionClass::Entering => {
            let mut left = outer(1.0);
            let mut right = outer(-1.0);
            left.reverse();
            right.reverse();
            (left, right)
        }
    })
}

/// Every lane of the topology, per arm entering before leaving.
pub fn all_lanes(topology: &TopologyModel) -> Vec<LaneRef> {
    let mut out = Vec::new();
    for (arm, a) in topology.arms.iter().enumerate() {
        for direction in [DirectionClass::Entering, DirectionClass::Leaving] {
            for index in 0..a.lanes(direction).len() {
                out.push(LaneRef {
                    arm,
                    direction,
                    index,
                });
            }
        }
    }
    out
}

/// One lanelet per topology lane, one straight connecting lanelet per lane
/// pair used by some trajectory, and shared borders wherever two lanes'
/// support points coincide.
pub fn initialize_lanelets(
    topology: &TopologyModel,
    assignments: &[PartAssignment],
    cfg: &LaneCourseConfig,
) -> Result<LaneletModel> {
    let lanes = all_lanes(topology);
    let mut lanelets = Vec::new();
    let mut index_of: BTreeMap<LaneRef, usize> = BTreeMap::new();
    for &lane in &lanes {
        let (left, right) = lane_borders(topology, lane, cfg.support_spacing, cfg.lane_length)?;
        index_of.insert(lane, lanelets.len());
        lanelets.push(Lanelet::from_borders(
            lanelets.len(),
            LaneletKind::Lane(lane),
            &left,
            &right,
        ));
    }

    let pairs: BTreeSet<(LaneRef, LaneRef)> = assignments
        .iter()
        .map(|a| (a.incoming, a.outgoing))
        .collect();
    let mut conn_of: BTreeMap<(LaneRef, LaneRef), usize> = BTreeMap::new();
    for &(from, to) in &pairs {
        let (Some(&a), Some(&b)) = (index_of.get(&from), index_of.get(&to)) else {
            return Err(Error::Lanelet(format!(
                "connection {from:?} -> {to:?} references a lane not in the topology"
            )));
        };
        let (la, lb) = (&lanelets[a], &lanelets[b]);
        let start = (la.left[la.pairs() - 1].position, la.right[la.pairs() - 1].position);
        let end = (lb.left[0].position, lb.right[0].position);
        let chord = start.0.midpoint(start.1).distance(end.0.midpoint(end.1));
        let n = ((chord / cfg.support_spacing).ceil() as usize + 1).max(2);
        let interp = |p: Point2, q: Point2| -> Vec<Point2> {
            (0..n).map(|k| p.lerp(q, k as f64 / (n - 1) as f64)).collect()
        };
        conn_of.insert((from, to), lanelets.len());
        lanelets.push(Lanelet::from_borders(
            lanelets.len(),
            LaneletKind::Connection { from, to },
            &interp(start.0, end.0),
            &interp(start.1, end.1),
        ));
    }

    let mut model = LaneletModel {
        lanelets: lanelets.into_iter().map(Arc::new).collect(),
        assignments: assignments
            .iter()
            .map(|a| {
                let conn = conn_of[&(a.incoming, a.outgoing)];
                (
                    a.id.clone(),
                    vec![index_of[&a.incoming], conn, index_of[&a.outgoing]],
                )
            })
            .collect(),
    };
    share_coincident_lane_borders(&mut model);
    Ok(model)
}

/// Shares lane border points of one arm that coincide within 1 µm.
pub fn share_coincident_lane_borders(model: &mut LaneletModel) {
    let lane_ids: Vec<(usize, usize)> = model
        .lanelets
        .iter()
        .filter_map(|l| match l.kind {
            LaneletKind::Lane(r) => Some((l.id, r.arm)),
            LaneletKind::Connection { .. } => None,
        })
        .collect();
    for (x, &(a, arm_a)) in lane_ids.iter().enumerate() {
        for &(b, arm_b) in &lane_ids[x + 1..] {
            if arm_a != arm_b {
                continue;
            }
            for sa in [Side::Left, Side::Right] {
                for sb in [Side::Left, Side::Right] {
                    let n_a = model.lanelet(a).pairs();
                    let n_b = model.lanelet(b).pairs();
                    for i in 0..n_a {
                        for k in 0..n_b {
                            let ra = BorderRef {
                                lanelet: a,
                                side: sa,
                                index: i,
                            };
                            let rb = BorderRef {
                                lanelet: b,
                                side: sb,
                                index: k,
                            };
                            let (pa, pb) = (model.point(ra), model.point(rb));
                            if pa.shared_with.is_none()
                                && pb.shared_with.is_none()
                                && pa.position.distance(pb.position) < 1e-6
                            {
                                let p = pa.position;
                                model.point_mut(rb).position = p;
                                model.share(ra, rb);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Points of every trajectory, each given to the closest lanelet of its
/// path (first on ties), so a lane never sees data from a neighbouring arm.
pub(super) fn points_by_lanelet(
    model: &LaneletModel,
    trajectories: &[Trajectory],
) -> Vec<Vec<Point2>> {
    let mut out = vec![Vec::new(); model.lanelets.len()];
    for t in trajectories {
        let Some(path) = model.assignments.get(t.id()) else {
            continue;
        };
        for p in t.positions() {
            let owner = path.iter().copied().min_by(|&a, &b| {
                let da = points_distance(p, &model.lanelet(a).center.points);
                let db = points_distance(p, &model.lanelet(b).center.points);
                da.total_cmp(&db)
            });
            if let Some(l) = owner {
                out[l].push(p);
            }
        }
    }
    out
}

/// Moves every center point along its local normal to the mean signed
/// offset of the nearby assigned trajectory points. Border pairs translate
/// with their center point. Sharing between points whose owners moved them
/// apart is dropped.
pub fn refine_initial(
    model: &LaneletModel,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
) -> LaneletModel {
    let mut out = model.clone();
    let data = points_by_lanelet(model, trajectories);
    let mut pair_shift: BTreeMap<(usize, usize), Point2> = BTreeMap::new();

    for (li, l) in model.lanelets.iter().enumerate() {
        let pts = &l.center.points;
        let arc: Vec<f64> = std::iter::once(0.0)
            .chain(pts.windows(2).scan(0.0, |s, w| {
                *s += w[0].distance(w[1]);
                Some(*s)
            }))
            .collect();
        let total = *arc.last().expect("center line has points");
        let projections: Vec<(f64, f64)> = data[li]
            .iter()
            .map(|&p| project_on_points(p, pts))
            .filter(|pr| pr.arc_length > 0.0 && pr.arc_length < total)
            .map(|pr| (pr.arc_length, pr.signed_offset))
            .collect();
        if projections.is_empty() {
            continue;
        }
        let mut new_points = pts.clone();
        for (j, &s) in arc.iter().enumerate() {
            let (sum, n) = projections
                .iter()
                .filter(|(a, _)| (a - s).abs() <= cfg.support_spacing)
                .fold((0.0, 0usize), |(sum, n), (_, off)| (sum + off, n + 1));
            if n == 0 {
                continue;
            }
            let Some(t) = l.tangent(j) else { continue };
            let shift = t.left_normal().as_vector() * (sum / n as f64);
            new_points[j] = pts[j] + shift;
            if j % 2 == 0 {
                pair_shift.insert((li, j / 2), shift);
            }
        }
        let lm = out.lanelet_mut(li);
        lm.center.points = new_points;
        for (&(_, i), &shift) in pair_shift.range((li, 0)..(li + 1, 0)) {
            lm.left[i].position += shift;
            lm.right[i].position += shift;
            lm.sync_center(i);
        }
    }

    for (a, b) in out.shared_pairs() {
        let sa = pair_shift.get(&(a.lanelet, a.index)).copied().unwrap_or(Point2::ORIGIN);
        let sb = pair_shift.get(&(b.lanelet, b.index)).copied().unwrap_or(Point2::ORIGIN);
        if sa.distance(sb) > 1e-12 {
            out.unshare(a);
        }
    }
    out
}

/// Unshared border-point pairs of neighbouring lanelets closer than the
/// merge radius. Lanes are neighbours within one arm; connections are
/// neighbours when they join the same two arms. Connection end points are
/// never candidates.
pub fn merge_candidates(model: &LaneletModel, cfg: &LaneCourseConfig) -> Vec<(BorderRef, BorderRef)> {
    let group = |l: &Lanelet| match l.kind {
        LaneletKind::Lane(r) => (0usize, r.arm, 0usize),
        LaneletKind::Connection { from, to } => (1, from.arm, to.arm),
    };
    let mut out = Vec::new();
    let n = model.lanelets.len();
    for a in 0..n {
        for b in a + 1..n {
            let (la, lb) = (model.lanelet(a), model.lanelet(b));
            if group(la) != group(lb) {
                continue;
            }
            for sa in [Side::Left, Side::Right] {
                for sb in [Side::Left, Side::Right] {
                    for (i, pa) in la.border(sa).iter().enumerate() {
                        if pa.shared_with.is_some() || is_connection_end(la, i) {
                            continue;
                        }
                        for (k, pb) in lb.border(sb).iter().enumerate() {
                            if pb.shared_with.is_some() || is_connection_end(lb, k) {
                                continue;
                            }
                            if pa.position.distance(pb.position) <= cfg.merge_radius {
                                out.push((
                                    BorderRef {
                                        lanelet: a,
                                        side: sa,
                                        index: i,
                                    },
                                    BorderRef {
                                        lanelet: b,
                                        side: sb,
                                        index: k,
                                    },
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(super) fn is_connection_end(l: &Lanelet, index: usize) -> bool {
    l.is_connection() && (index == 0 || index + 1 == l.pairs())
}
