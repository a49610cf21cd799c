use std::f64::consts::PI;

use rand::Rng;

use crate::geometry::{normalize_angle, Point2};
use crate::ingest::DirectionClass;

use super::model::{Arm, Lane, TopologyModel};
use super::TopologyConfig;

pub const MAX_ROTATION: f64 = 6.0 * PI / 180.0;
pub const MAX_CENTER_SHIFT: f64 = 6.0;
pub const MAX_GAP_CHANGE: f64 = 1.8;
pub const MIN_ARMS: usize = 2;

/// Cumulative thresholds on ω for rotate, shift, gap and arm moves; the
/// remainder changes lanes.
pub const THRESHOLDS: [f64; 4] = [0.4, 0.6, 0.7, 0.85];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Rotate,
    ShiftCenter,
    Gap,
    Arm,
    Lane,
}

/// A fully sampled mutation, so a move can be replayed or forced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyMove {
    Rotate { arm: usize, delta: f64 },
    ShiftCenter { distance: f64, angle: f64 },
    Gap { arm: usize, delta: f64 },
    AddArmInLargestGap,
    SplitArm { arm: usize },
    RemoveArm { arm: usize },
    AddLane { arm: usize, direction: DirectionClass, medial: bool },
    RemoveLane { arm: usize, direction: DirectionClass, index: usize },
}

impl TopologyMove {
    pub fn kind(&self) -> MoveKind {
        match self {
            TopologyMove::Rotate { .. } => MoveKind::Rotate,
            TopologyMove::ShiftCenter { .. } => MoveKind::ShiftCenter,
            TopologyMove::Gap { .. } => MoveKind::Gap,
            TopologyMove::AddArmInLargestGap
            | TopologyMove::SplitArm { .. }
            | TopologyMove::RemoveArm { .. } => MoveKind::Arm,
            TopologyMove::AddLane { .. } | TopologyMove::RemoveLane { .. } => MoveKind::Lane,
        }
    }
}

/// Draws the mutation selected by `omega`.
pub fn sample_move_with_omega<R: Rng + ?Sized>(
    omega: f64,
    model: &TopologyModel,
    rng: &mut R,
) -> TopologyMove {
    let n_arms = model.arms.len();
    if omega < THRESHOLDS[0] {
        TopologyMove::Rotate {
            arm: rng.random_range(0..n_arms),
            delta: rng.random_range(-MAX_ROTATION..=MAX_ROTATION),
        }
    } else if omega < THRESHOLDS[1] {
        TopologyMove::ShiftCenter {
            distance: rng.random_range(0.0..=MAX_CENTER_SHIFT),
            angle: rng.random_range(0.0..2.0 * PI),
        }
    } else if omega < THRESHOLDS[2] {
        TopologyMove::Gap {
            arm: rng.random_range(0..n_arms),
            delta: rng.random_range(-MAX_GAP_CHANGE..=MAX_GAP_CHANGE),
        }
    } else if omega < THRESHOLDS[3] {
        if rng.random::<f64>() < 0.5 {
            if rng.random::<f64>() < 0.5 {
                TopologyMove::AddArmInLargestGap
            } else {
                TopologyMove::SplitArm {
                    arm: rng.random_range(0..n_arms),
                }
            }
        } else {
            TopologyMove::RemoveArm {
                arm: rng.random_range(0..n_arms),
            }
        }
    } else if rng.random::<f64>() < 0.5 {
        let direction = if rng.random::<f64>() < 0.5 {
            DirectionClass::Entering
        } else {
            DirectionClass::Leaving
        };
        TopologyMove::AddLane {
            arm: rng.random_range(0..n_arms),
            direction,
            medial: rng.random::<f64>() < 0.5,
        }
    } else {
        // uniform over all lanes of the model
        let mut k = rng.random_range(0..model.lane_count().max(1));
        for (arm, a) in model.arms.iter().enumerate() {
            for direction in [DirectionClass::Entering, DirectionClass::Leaving] {
                let n = a.lanes(direction).len();
                if k < n {
                    return TopologyMove::RemoveLane {
                        arm,
                        direction,
                        index: k,
                    };
                }
                k -= n;
            }
        }
        unreachable!("model has at least one lane")
    }
}

pub fn sample_move<R: Rng + ?Sized>(model: &TopologyModel, rng: &mut R) -> TopologyMove {
    let omega = rng.random::<f64>();
    sample_move_with_omega(omega, model, rng)
}

/// Applies `mv`. Any result violating the structural bounds is discarded
/// and the input returned unchanged.
pub fn apply_topology_move(
    model: &TopologyModel,
    mv: &TopologyMove,
    cfg: &TopologyConfig,
) -> TopologyModel {
    let mut m = model.clone();
    match *mv {
        TopologyMove::Rotate { arm, delta } => {
            m.arms[arm].heading = normalize_angle(m.arms[arm].heading + delta);
        }
        TopologyMove::ShiftCenter { distance, angle } => {
            m.center += Point2::new(angle.cos(), angle.sin()) * distance;
        }
        TopologyMove::Gap { arm, delta } => {
            m.arms[arm].gap = (m.arms[arm].gap + delta).max(0.0);
        }
        TopologyMove::AddArmInLargestGap => {
            let n = m.arms.len();
            let widest = (0..n)
                .max_by(|&a, &b| m.separation_after(a).total_cmp(&m.separation_after(b)))
                .expect("model has arms");
            let heading = m.arms[widest].heading + m.separation_after(widest) / 2.0;
            m.arms
                .push(Arm::new(heading, cfg.gap_default, 1, 1, cfg.lane_width_default));
        }
        TopologyMove::SplitArm { arm } => {
            let original = m.arms[arm].clone();
            let half = cfg.min_arm_angle / 2.0;
            m.arms[arm].heading = normalize_angle(original.heading - half);
            m.arms.push(Arm {
                heading: normalize_angle(original.heading + half),
                ..original
            });
        }
        TopologyMove::RemoveArm { arm } => {
            if m.arms.len() <= MIN_ARMS {
                return model.clone();
            }
            m.arms.remove(arm);
        }
        TopologyMove::AddLane {
            arm,
            direction,
            medial,
        } => {
            let lane = Lane {
                direction,
                width: cfg.lane_width_default,
                offset_index: 0,
            };
            let lanes = m.arms[arm].lanes_mut(direction);
            if medial {
                lanes.insert(0, lane);
            } else {
                lanes.push(lane);
            }
        }
        TopologyMove::RemoveLane {
            arm,
            direction,
            index,
        } => {
            if m.arms[arm].lane_count() <= 1 {
                return model.clone();
            }
            m.arms[arm].lanes_mut(direction).remove(index);
        }
    }
    m.sort_arms();
    if m.check(MIN_ARMS, cfg.min_arm_angle).is_err() {
        return model.clone();
    }
    m
}

/// Samples and applies one random mutation.
pub fn propose_topology<R: Rng + ?Sized>(
    model: &TopologyModel,
    cfg: &TopologyConfig,
    rng: &mut R,
) -> (TopologyModel, MoveKind) {
    let mv = sample_move(model, rng);
    (apply_topology_move(model, &mv, cfg), mv.kind())
}
