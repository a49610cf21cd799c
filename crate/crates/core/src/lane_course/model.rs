use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction2, Point2};
use crate::ingest::TrackId;
use crate::topology::LaneRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Address of one border point in a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BorderRef {
    pub lanelet: usize,
    pub side: Side,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderPoint {
    #[serde(flatten)]
    pub position: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_with: Option<BorderRef>,
}

impl BorderPoint {
    pub fn new(position: Point2) -> Self {
        BorderPoint {
            position,
            shared_with: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneletKind {
    Lane(LaneRef),
    Connection { from: LaneRef, to: LaneRef },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterLine {
    pub points: Vec<Point2>,
}

/// Two border polylines with matched support points, oriented in travel
/// direction, plus the center line used for scoring.
///
/// Even center points are always the midpoints of their border pair; odd
/// center points are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lanelet {
    pub id: usize,
    pub kind: LaneletKind,
    pub left: Vec<BorderPoint>,
    pub right: Vec<BorderPoint>,
    pub center: CenterLine,
}

impl Lanelet {
    /// A lanelet with unshared borders and a freshly derived center line.
    pub fn from_borders(id: usize, kind: LaneletKind, left: &[Point2], right: &[Point2]) -> Self {
        let mut l = Lanelet {
            id,
            kind,
            left: left.iter().copied().map(BorderPoint::new).collect(),
            right: right.iter().copied().map(BorderPoint::new).collect(),
            center: CenterLine { points: Vec::new() },
        };
        l.center = compute_center_line(&l);
        l
    }

    pub fn border(&self, side: Side) -> &[BorderPoint] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn border_mut(&mut self, side: Side) -> &mut Vec<BorderPoint> {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    pub fn pairs(&self) -> usize {
        self.left.len()
    }

    pub fn is_connection(&self) -> bool {
        matches!(self.kind, LaneletKind::Connection { .. })
    }

    /// Re-derives the even center point of border pair `i`.
    pub fn sync_center(&mut self, i: usize) {
        self.center.points[2 * i] = self.left[i].position.midpoint(self.right[i].position);
    }

    /// Unit tangent of the center line around center index `j`.
    pub fn tangent(&self, j: usize) -> Option<Direction2> {
        let pts = &self.center.points;
        let a = pts[j.saturating_sub(1)];
        let b = pts[(j + 1).min(pts.len() - 1)];
        Direction2::from_vector(b - a).ok()
    }

    /// Every border pair keeps its left point on the left of the local
    /// travel direction.
    pub fn borders_oriented(&self) -> bool {
        (0..self.pairs()).all(|i| self.pair_oriented(i))
    }

    pub fn pair_oriented(&self, i: usize) -> bool {
        self.tangent(2 * i).is_some_and(|t| {
            let across = self.left[i].position - self.right[i].position;
            t.as_vector().cross(across) > 0.0
        })
    }
}

/// Midpoints of the border pairs with one extra midpoint between each
/// consecutive pair: `2n - 1` points for `n` pairs.
pub fn compute_center_line(l: &Lanelet) -> CenterLine {
    let mids: Vec<Point2> = l
        .left
        .iter()
        .zip(&l.right)
        .map(|(a, b)| a.position.midpoint(b.position))
        .collect();
    let mut points = Vec::with_capacity(2 * mids.len().saturating_sub(1) + 1);
    for (i, m) in mids.iter().enumerate() {
        if i > 0 {
            points.push(mids[i - 1].midpoint(*m));
        }
        points.push(*m);
    }
    CenterLine { points }
}

/// The stage-2 state: lanelets plus the lanelet path of every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneletModel {
    pub lanelets: Vec<Arc<Lanelet>>,
    pub assignments: BTreeMap<TrackId, Vec<usize>>,
}

impl LaneletModel {
    pub fn lanelet(&self, i: usize) -> &Lanelet {
        &self.lanelets[i]
    }

    pub fn lanelet_mut(&mut self, i: usize) -> &mut Lanelet {
        Arc::make_mut(&mut self.lanelets[i])
    }

    pub fn point(&self, r: BorderRef) -> &BorderPoint {
        &self.lanelets[r.lanelet].border(r.side)[r.index]
    }

    pub fn point_mut(&mut self, r: BorderRef) -> &mut BorderPoint {
        &mut self.lanelet_mut(r.lanelet).border_mut(r.side)[r.index]
    }

    /// Center-line polyline of a lanelet path, concatenated in order.
    pub fn path_points(&self, path: &[usize]) -> Vec<Point2> {
        path.iter()
            .flat_map(|&l| self.lanelets[l].center.points.iter().copied())
            .collect()
    }

    /// Links two unshared points. They must already coincide.
    pub fn share(&mut self, a: BorderRef, b: BorderRef) {
        self.point_mut(a).shared_with = Some(b);
        self.point_mut(b).shared_with = Some(a);
    }

    pub fn unshare(&mut self, a: BorderRef) {
        if let Some(b) = self.point(a).shared_with {
            self.point_mut(a).shared_with = None;
            self.point_mut(b).shared_with = None;
        }
    }

    /// Every shared pair once, as `(lower, higher)` references.
    pub fn shared_pairs(&self) -> Vec<(BorderRef, BorderRef)> {
        let mut out = Vec::new();
        for (li, l) in self.lanelets.iter().enumerate() {
            for side in [Side::Left, Side::Right] {
                for (index, p) in l.border(side).iter().enumerate() {
                    let me = BorderRef {
                        lanelet: li,
                        side,
                        index,
                    };
                    if let Some(other) = p.shared_with {
                        if me < other {
                            out.push((me, other));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn shared_pair_count(&self) -> usize {
        self.shared_pairs().len()
    }

    pub fn lane_lanelet(&self, lane: LaneRef) -> Option<usize> {
        self.lanelets
            .iter()
            .position(|l| l.kind == LaneletKind::Lane(lane))
    }

    /// Structural invariants: ids, equal border lengths, center-line size,
    /// consistent even center points, symmetric coincident sharing, and
    /// assignments to existing lanelets.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Lanelet(msg));
        for (i, l) in self.lanelets.iter().enumerate() {
            if l.id != i {
                return bad(format!("lanelet at {i} has id {}", l.id));
            }
            if l.left.len() != l.right.len() || l.left.len() < 2 {
                return bad(format!(
                    "lanelet {i} has {} left and {} right points",
                    l.left.len(),
                    l.right.len()
                ));
            }
            if l.center.points.len() != 2 * l.pairs() - 1 {
                return bad(format!("lanelet {i} center line has wrong length"));
            }
            for k in 0..l.pairs() {
                let m = l.left[k].position.midpoint(l.right[k].position);
                if m.distance(l.center.points[2 * k]) > 1e-9 {
                    return bad(format!("lanelet {i} center point {} is off its pair", 2 * k));
                }
            }
            for side in [Side::Left, Side::Right] {
                for (index, p) in l.border(side).iter().enumerate() {
                    let Some(o) = p.shared_with else { continue };
                    let me = BorderRef {
                        lanelet: i,
                        side,
                        index,
                    };
                    let back = self
                        .lanelets
                        .get(o.lanelet)
                        .and_then(|ol| ol.border(o.side).get(o.index));
                    match back {
                        Some(q) if q.shared_with == Some(me) => {
                            if q.position.distance(p.position) > 1e-9 {
                                return bad(format!("shared points {me:?} {o:?} apart"));
                            }
                        }
                        _ => return bad(format!("sharing {me:?} -> {o:?} is not symmetric")),
                    }
                    if o.lanelet == i {
                        return bad(format!("lanelet {i} shares with itself"));
                    }
                }
            }
        }
        for (id, path) in &self.assignments {
            if path.iter().any(|&l| l >= self.lanelets.len()) {
                return bad(format!("trajectory {id} assigned to a missing lanelet"));
            }
        }
        Ok(())
    }
}
