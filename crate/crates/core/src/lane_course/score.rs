use crate::error::{Error, Result};
use crate::geometry::{angle_between, points_distance, Direction2, Point2};
use crate::ingest::Trajectory;
use crate::topology::ln_normal_pdf;

use super::model::{CenterLine, LaneletModel};
use super::LaneCourseConfig;

/// Total absolute turning of a polyline: the sum over consecutive triples
/// of the angle between successive segment directions. Zero-length
/// segments are skipped.
pub fn smoothness_delta(m: &CenterLine) -> f64 {
    points_delta(&m.points)
}

pub fn points_delta(points: &[Point2]) -> f64 {
    let mut dirs = points
        .windows(2)
        .filter_map(|w| Direction2::from_vector(w[1] - w[0]).ok());
    let Some(mut prev) = dirs.next() else {
        return 0.0;
    };
    let mut total = 0.0;
    for d in dirs {
        total += angle_between(prev, d).abs();
        prev = d;
    }
    total
}

/// `τ · ln(1 + shared pairs) + Σ ln N(δ_l; 0, σ_smooth)`.
pub fn log_prior_course(model: &LaneletModel, cfg: &LaneCourseConfig) -> f64 {
    let sharing = cfg.tau * (1.0 + model.shared_pair_count() as f64).ln();
    let smooth: f64 = model
        .lanelets
        .iter()
        .map(|l| ln_normal_pdf(smoothness_delta(&l.center), cfg.sigma_smooth))
        .sum();
    sharing + smooth
}

/// Sum over the points of `t` of `ln N(d⊥; 0, σ⊥)` against the center
/// line of its assigned lanelet path.
pub fn log_likelihood_trajectory(
    t: &Trajectory,
    model: &LaneletModel,
    cfg: &LaneCourseConfig,
) -> Result<f64> {
    let path = model
        .assignments
        .get(t.id())
        .ok_or_else(|| Error::Unassigned(t.id().to_string()))?;
    let line = model.path_points(path);
    Ok(t.positions()
        .map(|p| ln_normal_pdf(points_distance(p, &line), cfg.sigma_perp))
        .sum())
}

/// Prior plus the likelihood of every assigned trajectory in `trajectories`.
pub fn log_posterior_course(
    model: &LaneletModel,
    trajectories: &[Trajectory],
    cfg: &LaneCourseConfig,
) -> f64 {
    let ll: f64 = trajectories
        .iter()
        .filter_map(|t| log_likelihood_trajectory(t, model, cfg).ok())
        .sum();
    log_prior_course(model, cfg) + ll
}
