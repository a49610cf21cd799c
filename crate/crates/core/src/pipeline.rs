//! End-to-end estimation of one dataset, and suites of synthetic ones.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{lane_course_report, topology_report, IntersectionReport};
use crate::geometry::Point2;
use crate::ingest::{summarize_trajectories, Dataset, DEFAULT_MIN_DOPPLER, DEFAULT_VOXEL_CELL};
use crate::lane_course::{estimate_lane_course, LaneCourseConfig, LaneletModel};
use crate::mcmc::derive_seed;
use crate::synthetic::{generate_scenario, scenario_seed, GenerationParams};
use crate::topology::{estimate_topology, Observation, TopologyConfig, TopologyModel};

/// Which measurements feed the topology chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// One summary per trajectory part, weighted by its point count.
    Tracked,
    /// Every filtered, voxelized detection.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub topology: TopologyConfig,
    pub lane_course: LaneCourseConfig,
    pub voxel_cell: f64,
    pub min_doppler: f64,
    /// Stage two runs only when set and the dataset has trajectories.
    pub run_lane_course: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            topology: TopologyConfig::default(),
            lane_course: LaneCourseConfig::default(),
            voxel_cell: DEFAULT_VOXEL_CELL,
            min_doppler: DEFAULT_MIN_DOPPLER,
            run_lane_course: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.lane_course.validate()?;
        if !(self.voxel_cell > 0.0) || !(self.min_doppler >= 0.0) {
            return Err(Error::Config(format!(
                "voxel_cell must be positive and min_doppler non-negative, got {} and {}",
                self.voxel_cell, self.min_doppler
            )));
        }
        Ok(())
    }
}

/// Wall-clock per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub topology_ms: f64,
    pub lane_course_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mode: InputMode,
    pub seed: u64,
    pub topology: TopologyModel,
    pub topology_log_posterior: f64,
    pub lanelets: Option<LaneletModel>,
    pub lane_course_log_posterior: Option<f64>,
    pub observation_count: usize,
    pub timings: Timings,
}

/// Split center for trajectories: the override, else the dataset's recorded
/// center, else the mean of all trajectory points.
pub fn split_center(dataset: &Dataset, seed_center: Option<Point2>) -> Option<Point2> {
    seed_center.or(dataset.center).or_else(|| {
        let points: Vec<Point2> = dataset.trajectories.iter().flat_map(|t| t.positions()).collect();
        Point2::mean(&points)
    })
}

pub fn observations(
    dataset: &Dataset,
    mode: InputMode,
    cfg: &PipelineConfig,
    seed_center: Option<Point2>,
) -> Vec<Observation> {
    match mode {
        InputMode::Tracked => match split_center(dataset, seed_center) {
            Some(c) => summarize_trajectories(&dataset.trajectories, c)
                .iter()
                .map(|s| Observation::from_summary(s, cfg.topology.weight_summaries_by_points))
                .collect(),
            None => Vec::new(),
        },
        InputMode::Raw => dataset
            .preprocessed_detections(cfg.voxel_cell, cfg.min_doppler)
            .iter()
            .map(Observation::from)
            .collect(),
    }
}

/// Stage one, then stage two on the found topology. The two chains draw
/// from independent streams of `seed`.
pub fn estimate(
    dataset: &Dataset,
    mode: InputMode,
    cfg: &PipelineConfig,
    seed: u64,
    seed_center: Option<Point2>,
) -> Result<Estimate> {
    cfg.validate()?;
    let obs = observations(dataset, mode, cfg, seed_center);
    let t0 = Instant::now();
    let topo = estimate_topology(&obs, &cfg.topology, derive_seed(seed, 0))?;
    let topology_ms = t0.elapsed().as_secs_f64() * 1e3;

    let (mut lanelets, mut lane_lp, mut lane_course_ms) = (None, None, None);
    if cfg.run_lane_course && !dataset.trajectories.is_empty() {
        let t1 = Instant::now();
        let course = estimate_lane_course(
            &topo.best_state,
            &dataset.trajectories,
            &cfg.lane_course,
            derive_seed(seed, 1),
        )?;
        lane_course_ms = Some(t1.elapsed().as_secs_f64() * 1e3);
        lane_lp = Some(course.best_log_posterior);
        lanelets = Some(course.best_state);
    }
    Ok(Estimate {
        mode,
        seed,
        topology: topo.best_state,
        topology_log_posterior: topo.best_log_posterior,
        lanelets,
        lane_course_log_posterior: lane_lp,
        observation_count: obs.len(),
        timings: Timings {
            topology_ms,
            lane_course_ms,
        },
    })
}

/// A seeded batch of synthetic intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub count: usize,
    pub base_seed: u64,
    pub generation: GenerationParams,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            count: 100,
            base_seed: 0,
            generation: GenerationParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub index: usize,
    pub scenario_seed: u64,
    pub report: IntersectionReport,
    pub timings: Timings,
}

/// Generates scenario `index` of `suite`, estimates it and scores the result.
/// Lanelets are scored only where data passed through them.
pub fn run_suite_entry(
    suite: &SuiteConfig,
    index: usize,
    mode: InputMode,
    cfg: &PipelineConfig,
) -> Result<SuiteEntry> {
    let seed = scenario_seed(suite.base_seed, index as u64);
    let scenario = generate_scenario(&suite.generation, seed)?;
    let est = estimate(&scenario.dataset, mode, cfg, seed, None)?;
    let topology = topology_report(&est.topology, &scenario.truth.topology);
    let lane_course = est
        .lanelets
        .as_ref()
        .map(|m| lane_course_report(m, &est.topology, &scenario.truth, true));
    Ok(SuiteEntry {
        index,
        scenario_seed: seed,
        report: IntersectionReport {
            topology,
            lane_course,
        },
        timings: est.timings,
    })
}
