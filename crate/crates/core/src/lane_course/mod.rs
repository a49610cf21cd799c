//! Stage two: precise lane courses on a fixed topology.
//!
//! Every lane of the topology becomes a lanelet, trajectories add straight
//! connecting lanelets across the intersection, and a chain then bends
//! center lines and fuses or separates neighbouring borders. The topology
//! itself is read only.

mod init;
mod model;
mod proposal;
mod score;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Trajectory;
use crate::mcmc::{run_chain, AnnealingSchedule, ChainResult};
use crate::topology::TopologyModel;

pub use init::{
    all_lanes, assign_parts, initialize_lanelets, lane_borders, merge_candidates, nearest_lane,
    refine_initial, share_coincident_lane_borders, PartAssignment,
};
pub use model::{
    compute_center_line, BorderPoint, BorderRef, CenterLine, Lanelet, LaneletKind, LaneletModel,
    Side,
};
pub use proposal::{
    apply_course_move, center_point_count, propose_course, sample_course_move, Change, CourseMove,
    CourseMoveKind,
};
pub use score::{
    log_likelihood_trajectory, log_posterior_course, log_prior_course, points_delta,
    smoothness_delta,
};
pub use state::CourseState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaneCourseConfig {
    /// Lateral deviation of trajectory points from a center line, meters.
    pub sigma_perp: f64,
    /// Spread of the total turning of one center line, radians.
    pub sigma_smooth: f64,
    /// Weight of the border sharing reward.
    pub tau: f64,
    /// Distance between border support points, meters.
    pub support_spacing: f64,
    /// Largest displacement of a split border point, meters.
    pub split_max: f64,
    /// Standard deviation of lateral center point moves, meters.
    pub move_sigma: f64,
    /// Border points closer than this may be fused, meters.
    pub merge_radius: f64,
    /// Length of each lane lanelet outward from the arm mouth, meters.
    pub lane_length: f64,
    pub n_samples: usize,
    pub schedule: AnnealingSchedule,
}

impl Default for LaneCourseConfig {
    fn default() -> Self {
        LaneCourseConfig {
            sigma_perp: 1.0,
            sigma_smooth: 0.5,
            tau: 1.0,
            support_spacing: 2.0,
            split_max: 0.6,
            move_sigma: 0.3,
            merge_radius: 1.0,
            lane_length: 100.0,
            n_samples: 20_000,
            schedule: AnnealingSchedule::default(),
        }
    }
}

impl LaneCourseConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_perp", self.sigma_perp),
            ("sigma_smooth", self.sigma_smooth),
            ("tau", self.tau),
            ("support_spacing", self.support_spacing),
            ("split_max", self.split_max),
            ("move_sigma", self.move_sigma),
            ("merge_radius", self.merge_radius),
            ("lane_length", self.lane_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        self.schedule.validate()
    }
}

/// The model the chain starts from and the border pairs it may fuse.
#[derive(Debug, Clone)]
pub struct PreparedCourse {
    pub model: LaneletModel,
    pub candidates: Vec<(BorderRef, BorderRef)>,
}

/// Assignment, initialization, refinement and candidate search.
pub fn prepare_lane_course(
    topology: &TopologyModel,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
) -> Result<PreparedCourse> {
    cfg.validate()?;
    if trajectories.is_empty() {
        return Err(Error::EmptyMeasurements);
    }
    let parts = assign_parts(topology, trajectories, cfg);
    let initial = initialize_lanelets(topology, &parts, cfg)?;
    let model = refine_initial(&initial, trajectories, cfg);
    let candidates = merge_candidates(&model, cfg);
    Ok(PreparedCourse { model, candidates })
}

/// Prepares the initial lanelets and runs the stage-2 chain on them.
pub fn estimate_lane_course(
    topology: &TopologyModel,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
    seed: u64,
) -> Result<ChainResult<LaneletModel>> {
    let prepared = prepare_lane_course(topology, trajectories, cfg)?;
    estimate_lane_course_from(prepared, trajectories, cfg, seed)
}

/// Runs the chain from an already prepared model.
pub fn estimate_lane_course_from(
    prepared: PreparedCourse,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
    seed: u64,
) -> Result<ChainResult<LaneletModel>> {
    cfg.validate()?;
    let state = CourseState::new(prepared.model, trajectories, prepared.candidates, cfg)?;
    let result = run_chain(
        state,
        |s, rng| s.propose(rng),
        |s| s.log_posterior(),
        cfg.schedule.with_steps(cfg.n_samples),
        seed,
    )?;
    Ok(result.map(CourseState::into_model))
}

#[cfg(test)]
mod tests;
