//! Stage one: the coarse lane-level topology of an intersection.
//!
//! A model is a center point with arms, each arm a bundle of straight lanes
//! split by a medial gap. The chain mutates one parameter at a time and
//! scores every model against all measurements at once.

mod model;
mod proposal;
mod score;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::mcmc::{derive_seed, run_chain, AnnealingSchedule, ChainResult};

pub use model::{Arm, Lane, LaneRay, LaneRef, TopologyModel, MIN_MOUTH_DISTANCE, MOUTH_MARGIN};
pub use proposal::{
    apply_topology_move, propose_topology, sample_move, sample_move_with_omega, MoveKind,
    TopologyMove, MAX_CENTER_SHIFT, MAX_GAP_CHANGE, MAX_ROTATION, MIN_ARMS, THRESHOLDS,
};
pub use score::{
    ln_normal_pdf, log_likelihood_point, log_likelihood_topology, log_posterior_topology,
    log_prior_topology, Observation, RayTable,
};

/// A categorical prior over a count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountPrior {
    Table { probabilities: BTreeMap<usize, f64> },
    /// `P(n) ∝ ratio^|n - mode|` on `min..=max`.
    Geometric {
        min: usize,
        max: usize,
        mode: usize,
        ratio: f64,
    },
}

impl CountPrior {
    /// `None` outside the support.
    pub fn ln_prob(&self, n: usize) -> Option<f64> {
        match self {
            CountPrior::Table { probabilities } => probabilities
                .get(&n)
                .filter(|p| **p > 0.0)
                .map(|p| p.ln()),
            CountPrior::Geometric {
                min,
                max,
                mode,
                ratio,
            } => {
                if n < *min || n > *max {
                    return None;
                }
                let z: f64 = (*min..=*max).map(|k| ratio.powi(k.abs_diff(*mode) as i32)).sum();
                Some(n.abs_diff(*mode) as f64 * ratio.ln() - z.ln())
            }
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let err = |msg: String| Err(Error::Config(format!("{name}: {msg}")));
        match self {
            CountPrior::Table { probabilities } => {
                if probabilities.values().any(|p| !(*p >= 0.0)) {
                    return err("negative probability".into());
                }
                let total: f64 = probabilities.values().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return err(format!("probabilities sum to {total}, not 1"));
                }
            }
            CountPrior::Geometric {
                min,
                max,
                mode,
                ratio,
            } => {
                if min > max || mode < min || mode > max {
                    return err(format!("bad support {min}..={max} with mode {mode}"));
                }
                if !(*ratio > 0.0 && *ratio <= 1.0) {
                    return err(format!("ratio {ratio} outside (0, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Short chains run ahead of the main one at wider lateral deviations.
///
/// With a narrow `sigma_perp` the posterior has separate modes one lane width
/// apart (the same points explained by re-indexed lanes and a shifted
/// center); a wide likelihood joins them, and each narrower stage starts from
/// the previous stage's best model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LateralWarmup {
    /// Lateral deviation of each warm-up chain in run order, meters.
    pub sigma_perp: Vec<f64>,
    /// Share of `n_samples` spent in warm-up, split evenly between stages.
    pub fraction: f64,
    /// Start temperature of the first stage; later stages use the schedule's.
    pub t_initial: f64,
}

impl Default for LateralWarmup {
    fn default() -> Self {
        LateralWarmup {
            sigma_perp: vec![4.0, 3.0, 2.0, 1.5],
            fraction: 0.6,
            t_initial: 10.0,
        }
    }
}

impl LateralWarmup {
    pub fn none() -> Self {
        LateralWarmup {
            sigma_perp: Vec::new(),
            fraction: 0.0,
            t_initial: 1.0,
        }
    }

    /// Steps of each warm-up stage out of `total`; the main chain runs the rest.
    pub fn stage_steps(&self, total: usize) -> usize {
        if self.sigma_perp.is_empty() {
            return 0;
        }
        (self.fraction * total as f64 / self.sigma_perp.len() as f64).floor() as usize
    }

    fn validate(&self, t_final: f64) -> Result<()> {
        if self.sigma_perp.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("warm-up sigma_perp {:?}", self.sigma_perp)));
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!("warm-up fraction {} outside [0, 1]", self.fraction)));
        }
        if !(self.t_initial >= t_final && self.t_initial.is_finite()) {
            return Err(Error::Config(format!(
                "warm-up t_initial {} below t_final {t_final}",
                self.t_initial
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    /// Lateral deviation of measurements from a lane center, meters.
    pub sigma_perp: f64,
    /// Angular deviation of measured headings from lane direction, radians.
    pub sigma_ang: f64,
    pub arm_count_prior: CountPrior,
    pub lane_count_prior: CountPrior,
    pub min_arm_angle: f64,
    pub lane_width_default: f64,
    /// Gap given to arms created by the sampler or the initial model.
    pub gap_default: f64,
    pub ray_length: f64,
    pub n_samples: usize,
    pub schedule: AnnealingSchedule,
    pub likelihood_floor: f64,
    /// Raise each track summary's likelihood to its point count instead of
    /// counting it once.
    pub weight_summaries_by_points: bool,
    pub warmup: LateralWarmup,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            sigma_perp: 1.0,
            sigma_ang: 10f64.to_radians(),
            arm_count_prior: CountPrior::Table {
                probabilities: BTreeMap::from([(2, 0.15), (3, 0.35), (4, 0.35), (5, 0.15)]),
            },
            lane_count_prior: CountPrior::Geometric {
                min: 2,
                max: 40,
                mode: 4,
                ratio: 0.25,
            },
            min_arm_angle: 45f64.to_radians(),
            lane_width_default: 3.5,
            gap_default: 1.0,
            ray_length: 100.0,
            n_samples: 5000,
            schedule: AnnealingSchedule::default(),
            likelihood_floor: 1e-12f64.ln(),
            weight_summaries_by_points: false,
            warmup: LateralWarmup::default(),
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_perp", self.sigma_perp),
            ("sigma_ang", self.sigma_ang),
            ("min_arm_angle", self.min_arm_angle),
            ("lane_width_default", self.lane_width_default),
            ("ray_length", self.ray_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gap_default >= 0.0) {
            return Err(Error::Config(format!("gap_default {}", self.gap_default)));
        }
        if !self.likelihood_floor.is_finite() {
            return Err(Error::Config("likelihood_floor must be finite".into()));
        }
        self.arm_count_prior.validate("arm_count_prior")?;
        self.lane_count_prior.validate("lane_count_prior")?;
        self.warmup.validate(self.schedule.t_final)?;
        self.schedule.validate()
    }

    pub fn initial_model(&self, center: Point2) -> TopologyModel {
        TopologyModel::initial(center, self.gap_default, self.lane_width_default)
    }
}

/// Runs the stage-1 chain from the four-arm cross at the measurement
/// centroid and returns the best model found.
pub fn estimate_topology(
    observations: &[Observation],
    cfg: &TopologyConfig,
    seed: u64,
) -> Result<ChainResult<TopologyModel>> {
    let centroid =
        Point2::mean(observations.iter().map(|o| &o.position)).ok_or(Error::EmptyMeasurements)?;
    estimate_topology_from(cfg.initial_model(centroid), observations, cfg, seed)
}

/// [`estimate_topology`] from a given starting model. The warm-up stages and
/// the main chain together take exactly `cfg.n_samples` steps; the returned
/// posterior is the main chain's, under `cfg.sigma_perp`.
pub fn estimate_topology_from(
    initial: TopologyModel,
    observations: &[Observation],
    cfg: &TopologyConfig,
    seed: u64,
) -> Result<ChainResult<TopologyModel>> {
    cfg.validate()?;
    if observations.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    let per_stage = cfg.warmup.stage_steps(cfg.n_samples);
    let (mut state, mut accepted, mut proposed) = (initial, 0, 0);
    if per_stage > 0 {
        for (k, &sigma_perp) in cfg.warmup.sigma_perp.iter().enumerate() {
            let stage = TopologyConfig {
                sigma_perp,
                ..cfg.clone()
            };
            let t_initial = if k == 0 { cfg.warmup.t_initial } else { cfg.schedule.t_initial };
            let schedule = AnnealingSchedule::new(t_initial, cfg.schedule.t_final, per_stage)?;
            let r = run_single(state, observations, &stage, schedule, derive_seed(seed, k as u64 + 1))?;
            state = r.best_state;
            accepted += r.accepted_count;
            proposed += r.proposed_count;
        }
    }
    let main_steps = cfg.n_samples - per_stage * cfg.warmup.sigma_perp.len();
    let mut result = run_single(state, observations, cfg, cfg.schedule.with_steps(main_steps), seed)?;
    result.accepted_count += accepted;
    result.proposed_count += proposed;
    Ok(result)
}

fn run_single(
    initial: TopologyModel,
    observations: &[Observation],
    cfg: &TopologyConfig,
    schedule: AnnealingSchedule,
    seed: u64,
) -> Result<ChainResult<TopologyModel>> {
    run_chain(
        initial,
        |m, rng| propose_topology(m, cfg, rng).0,
        |m| log_posterior_topology(observations, m, cfg),
        schedule,
        seed,
    )
}
