use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Point2;

use super::model::{BorderRef, LaneletModel, Side};
use super::LaneCourseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CourseMoveKind {
    Move,
    Split,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CourseMove {
    /// Lateral shift of one center point along its local normal.
    Move {
        lanelet: usize,
        index: usize,
        offset: f64,
    },
    /// Unshare a pair and displace `moved` by `displacement`.
    Split {
        moved: BorderRef,
        displacement: Point2,
    },
    /// Share `moved` with `anchor`, snapping it onto the anchor's position.
    Merge { anchor: BorderRef, moved: BorderRef },
}

impl CourseMove {
    pub fn kind(&self) -> CourseMoveKind {
        match self {
            CourseMove::Move { .. } => CourseMoveKind::Move,
            CourseMove::Split { .. } => CourseMoveKind::Split,
            CourseMove::Merge { .. } => CourseMoveKind::Merge,
        }
    }
}

/// A center point whose position changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Change {
    pub lanelet: usize,
    pub center_index: usize,
}

pub fn center_point_count(model: &LaneletModel) -> usize {
    model.lanelets.iter().map(|l| l.center.points.len()).sum()
}

/// Draws a move of the requested kind, or `None` when nothing is eligible.
pub fn sample_course_move<R: Rng + ?Sized>(
    kind: CourseMoveKind,
    model: &LaneletModel,
    candidates: &[(BorderRef, BorderRef)],
    cfg: &LaneCourseConfig,
    rng: &mut R,
) -> Option<CourseMove> {
    match kind {
        CourseMoveKind::Move => {
            let total = center_point_count(model);
            if total == 0 {
                return None;
            }
            let mut k = rng.random_range(0..total);
            let lanelet = model
                .lanelets
                .iter()
                .position(|l| {
                    if k < l.center.points.len() {
                        true
                    } else {
                        k -= l.center.points.len();
                        false
                    }
                })
                .expect("k < total");
            let normal = Normal::new(0.0, cfg.move_sigma).expect("move_sigma validated");
            Some(CourseMove::Move {
                lanelet,
                index: k,
                offset: normal.sample(rng),
            })
        }
        CourseMoveKind::Split => {
            let pairs = model.shared_pairs();
            if pairs.is_empty() {
                return None;
            }
            let (a, b) = pairs[rng.random_range(0..pairs.len())];
            let moved = if rng.random::<f64>() < 0.5 { a } else { b };
            let dist = rng.random_range(0.0..=cfg.split_max);
            let phi = rng.random_range(0.0..2.0 * PI);
            Some(CourseMove::Split {
                moved,
                displacement: Point2::new(phi.cos(), phi.sin()) * dist,
            })
        }
        CourseMoveKind::Merge => {
            let eligible: Vec<&(BorderRef, BorderRef)> = candidates
                .iter()
                .filter(|(a, b)| {
                    model.point(*a).shared_with.is_none() && model.point(*b).shared_with.is_none()
                })
                .collect();
            if eligible.is_empty() {
                return None;
            }
            let &(a, b) = eligible[rng.random_range(0..eligible.len())];
            // the surviving position comes from either side with equal odds
            let (anchor, moved) = if rng.random::<f64>() < 0.5 { (a, b) } else { (b, a) };
            Some(CourseMove::Merge { anchor, moved })
        }
    }
}

fn translate_point(model: &mut LaneletModel, r: BorderRef, delta: Point2, changes: &mut Vec<Change>) {
    let l = model.lanelet_mut(r.lanelet);
    let p = &mut l.border_mut(r.side)[r.index];
    p.position += delta;
    l.sync_center(r.index);
    changes.push(Change {
        lanelet: r.lanelet,
        center_index: 2 * r.index,
    });
}

/// Applies `mv` in place and reports the center points it moved. Returns
/// `None`, leaving `model` untouched, if the move would flip a border pair
/// that was correctly oriented.
pub fn apply_course_move(model: &mut LaneletModel, mv: &CourseMove) -> Option<Vec<Change>> {
    let mut trial = model.clone();
    let mut changes = Vec::with_capacity(4);
    match *mv {
        CourseMove::Move {
            lanelet,
            index,
            offset,
        } => {
            let l = trial.lanelet(lanelet);
            let normal = l.tangent(index)?.left_normal().as_vector();
            let delta = normal * offset;
            if index % 2 == 0 {
                let i = index / 2;
                for side in [Side::Left, Side::Right] {
                    let r = BorderRef {
                        lanelet,
                        side,
                        index: i,
                    };
                    // shared partners move jointly
                    let partner = trial.point(r).shared_with;
                    translate_point(&mut trial, r, delta, &mut changes);
                    if let Some(p) = partner {
                        translate_point(&mut trial, p, delta, &mut changes);
                    }
                }
            } else {
                let lm = trial.lanelet_mut(lanelet);
                lm.center.points[index] += delta;
                changes.push(Change {
                    lanelet,
                    center_index: index,
                });
            }
        }
        CourseMove::Split {
            moved,
            displacement,
        } => {
            trial.point(moved).shared_with?;
            trial.unshare(moved);
            translate_point(&mut trial, moved, displacement, &mut changes);
        }
        CourseMove::Merge { anchor, moved } => {
            if trial.point(anchor).shared_with.is_some() || trial.point(moved).shared_with.is_some()
            {
                return None;
            }
            let delta = trial.point(anchor).position - trial.point(moved).position;
            translate_point(&mut trial, moved, delta, &mut changes);
            // exact coincidence, free of rounding in the translation
            trial.point_mut(moved).position = trial.point(anchor).position;
            trial.lanelet_mut(moved.lanelet).sync_center(moved.index);
            trial.share(anchor, moved);
        }
    }
    changes.sort();
    changes.dedup();
    if !orientation_preserved(model, &trial, &changes) {
        return None;
    }
    *model = trial;
    Some(changes)
}

/// Border pairs near a change that were oriented before must stay so.
fn orientation_preserved(before: &LaneletModel, after: &LaneletModel, changes: &[Change]) -> bool {
    changes.iter().all(|c| {
        let (b, a) = (before.lanelet(c.lanelet), after.lanelet(c.lanelet));
        let lo = (c.center_index / 2).saturating_sub(1);
        let hi = (c.center_index / 2 + 1).min(a.pairs() - 1);
        (lo..=hi).all(|i| !b.pair_oriented(i) || a.pair_oriented(i))
    })
}

/// One uniformly chosen move type, then one move of that type. Ineligible
/// or rejected moves leave the model unchanged.
pub fn propose_course<R: Rng + ?Sized>(
    model: &LaneletModel,
    candidates: &[(BorderRef, BorderRef)],
    cfg: &LaneCourseConfig,
    rng: &mut R,
) -> (LaneletModel, CourseMoveKind, Vec<Change>) {
    let kind = match rng.random_range(0..3) {
        0 => CourseMoveKind::Move,
        1 => CourseMoveKind::Split,
        _ => CourseMoveKind::Merge,
    };
    let mut out = model.clone();
    let changes = sample_course_move(kind, model, candidates, cfg, rng)
        .and_then(|mv| apply_course_move(&mut out, &mv))
        .unwrap_or_default();
    (out, kind, changes)
}
