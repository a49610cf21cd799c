use std::f64::consts::PI;

use crate::geometry::{angle_between, Direction2, Point2};
use crate::ingest::{Detection, DirectionClass, TrackSummary};

use super::model::TopologyModel;
use super::TopologyConfig;

/// Log density of `N(0, sigma)` at `x`.
pub fn ln_normal_pdf(x: f64, sigma: f64) -> f64 {
    -0.5 * (x / sigma).powi(2) - (sigma * (2.0 * PI).sqrt()).ln()
}

/// One measurement as the stage-1 likelihood sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Point2,
    /// `None` matches lanes of either direction.
    pub class: Option<DirectionClass>,
    pub orientation: Option<Direction2>,
    /// Exponent on the per-point likelihood.
    pub weight: f64,
}

impl From<&Detection> for Observation {
    fn from(d: &Detection) -> Self {
        Observation {
            position: d.position,
            class: d.class(),
            orientation: d.orientation(),
            weight: 1.0,
        }
    }
}

impl Observation {
    /// A summary counted once, or as many times as it has points.
    pub fn from_summary(s: &TrackSummary, by_points: bool) -> Self {
        Observation {
            weight: if by_points { s.weight as f64 } else { 1.0 },
            ..Observation::from(s)
        }
    }
}

impl From<&TrackSummary> for Observation {
    fn from(s: &TrackSummary) -> Self {
        Observation {
            position: s.mean_position,
            class: Some(s.direction_class),
            orientation: Some(s.mean_direction),
            weight: s.weight as f64,
        }
    }
}

/// `ln P(|A|) + ln P(|L|)`; a count outside a prior's support contributes
/// the likelihood floor instead.
pub fn log_prior_topology(model: &TopologyModel, cfg: &TopologyConfig) -> f64 {
    let floor = cfg.likelihood_floor;
    cfg.arm_count_prior.ln_prob(model.arms.len()).unwrap_or(floor)
        + cfg.lane_count_prior.ln_prob(model.lane_count()).unwrap_or(floor)
}

/// Lane rays in arm-local form, for scoring many points against one model.
pub struct RayTable {
    arms: Vec<ArmFrame>,
    sigma_perp: f64,
    sigma_ang: f64,
    norm_perp: f64,
    norm_ang: f64,
    floor: f64,
}

struct ArmFrame {
    origin: Point2,
    axis: Point2,
    right: Point2,
    mouth: f64,
    length: f64,
    outward: Direction2,
    lanes: Vec<(DirectionClass, f64)>,
}

impl RayTable {
    pub fn new(model: &TopologyModel, cfg: &TopologyConfig) -> RayTable {
        let arms = model
            .arms
            .iter()
            .enumerate()
            .map(|(i, arm)| {
                let outward = arm.axis();
                let mut lanes = Vec::with_capacity(arm.lane_count());
                for dir in [DirectionClass::Entering, DirectionClass::Leaving] {
                    for k in 0..arm.lanes(dir).len() {
                        lanes.push((dir, arm.lateral_offset(dir, k)));
                    }
                }
                ArmFrame {
                    origin: model.center,
                    axis: outward.as_vector(),
                    right: outward.right_normal().as_vector(),
                    mouth: model.mouth_distance(i),
                    length: cfg.ray_length,
                    outward,
                    lanes,
                }
            })
            .collect();
        RayTable {
            arms,
            sigma_perp: cfg.sigma_perp,
            sigma_ang: cfg.sigma_ang,
            norm_perp: ln_normal_pdf(0.0, cfg.sigma_perp),
            norm_ang: ln_normal_pdf(0.0, cfg.sigma_ang),
            floor: cfg.likelihood_floor,
        }
    }

    /// Floored, weighted log-likelihood of one observation.
    pub fn log_likelihood(&self, z: &Observation) -> f64 {
        // Log-sum-exp with a running maximum: terms far below the max add
        // nothing representable.
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        let inv_var = 1.0 / (self.sigma_perp * self.sigma_perp);
        for arm in &self.arms {
            let rel = z.position - arm.origin;
            let along = rel.dot(arm.axis);
            let lat = rel.dot(arm.right);
            let beyond = if along < arm.mouth {
                arm.mouth - along
            } else if along > arm.mouth + arm.length {
                along - arm.mouth - arm.length
            } else {
                0.0
            };
            let (ang_in, ang_out) = match z.orientation {
                Some(o) => (
                    self.ln_ang(angle_between(o, arm.outward.reversed())),
                    self.ln_ang(angle_between(o, arm.outward)),
                ),
                None => (0.0, 0.0),
            };
            for &(dir, offset) in &arm.lanes {
                if z.class.is_some_and(|c| c != dir) {
                    continue;
                }
                let d_lat = lat - offset;
                let d2 = d_lat * d_lat + beyond * beyond;
                let ang = match dir {
                    DirectionClass::Entering => ang_in,
                    DirectionClass::Leaving => ang_out,
                };
                let term = -0.5 * d2 * inv_var + self.norm_perp + ang;
                if term > max {
                    acc = acc * (max - term).exp() + 1.0;
                    max = term;
                } else {
                    acc += (term - max).exp();
                }
            }
        }
        let ll = if max == f64::NEG_INFINITY {
            self.floor
        } else {
            (max + acc.ln()).max(self.floor)
        };
        z.weight * ll
    }

    fn ln_ang(&self, angle: f64) -> f64 {
        -0.5 * (angle / self.sigma_ang).powi(2) + self.norm_ang
    }

    pub fn total(&self, observations: &[Observation]) -> f64 {
        observations.iter().map(|z| self.log_likelihood(z)).sum()
    }
}

/// Weighted log-likelihood of one observation, summed over every lane of
/// matching direction.
pub fn log_likelihood_point(z: &Observation, model: &TopologyModel, cfg: &TopologyConfig) -> f64 {
    RayTable::new(model, cfg).log_likelihood(z)
}

pub fn log_likelihood_topology(
    observations: &[Observation],
    model: &TopologyModel,
    cfg: &TopologyConfig,
) -> f64 {
    RayTable::new(model, cfg).total(observations)
}

pub fn log_posterior_topology(
    observations: &[Observation],
    model: &TopologyModel,
    cfg: &TopologyConfig,
) -> f64 {
    log_prior_topology(model, cfg) + log_likelihood_topology(observations, model, cfg)
}
