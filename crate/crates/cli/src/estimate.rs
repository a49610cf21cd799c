use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use crossroads::geometry::Point2;
use crossroads::ingest::Dataset;
use crossroads::lane_course::LaneletModel;
use crossroads::pipeline::{estimate, Estimate, InputMode, Timings};
use crossroads::topology::TopologyModel;
use serde::{Deserialize, Serialize};

use crate::config::{parse_point, read_text, write_json, ConfigArgs, RunConfig};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Measurement file.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory for topology.json, lanelets.json and timing.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Point at which trajectories are split before any model exists.
    #[arg(long = "seed-center", value_name = "X,Y", value_parser = parse_point)]
    pub seed_center: Option<Point2>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub seed: u64,
    pub config: RunConfig,
    pub mode: InputMode,
    pub observation_count: usize,
    pub log_posterior: f64,
    pub topology: TopologyModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneletFile {
    pub seed: u64,
    pub config: RunConfig,
    pub log_posterior: f64,
    pub lanelets: LaneletModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingFile {
    pub seed: u64,
    pub config: RunConfig,
    pub timings: Timings,
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_estimate(dir: &Path, est: &Estimate, cfg: &RunConfig) -> Result<()> {
    write_json(
        &dir.join("topology.json"),
        &TopologyFile {
            seed: est.seed,
            config: cfg.clone(),
            mode: est.mode,
            observation_count: est.observation_count,
            log_posterior: est.topology_log_posterior,
            topology: est.topology.clone(),
        },
    )?;
    if let (Some(lanelets), Some(lp)) = (&est.lanelets, est.lane_course_log_posterior) {
        write_json(
            &dir.join("lanelets.json"),
            &LaneletFile {
                seed: est.seed,
                config: cfg.clone(),
                log_posterior: lp,
                lanelets: lanelets.clone(),
            },
        )?;
    }
    write_json(
        &dir.join("timing.json"),
        &TimingFile {
            seed: est.seed,
            config: cfg.clone(),
            timings: est.timings,
        },
    )
}

pub fn run(args: &EstimateArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let dataset = load_dataset(&args.input)?;
    let est = estimate(&dataset, cfg.mode, &cfg.pipeline, cfg.seed, args.seed_center)
        .with_context(|| format!("estimating {}", args.input.display()))?;
    write_estimate(&args.out, &est, &cfg)?;
    let lanes: usize = est.topology.arms.iter().map(|a| a.lane_count()).sum();
    println!(
        "{} arms, {lanes} lanes, center ({:.2}, {:.2}); stage 1 {:.1} ms{}",
        est.topology.arms.len(),
        est.topology.center.x,
        est.topology.center.y,
        est.timings.topology_ms,
        est.timings
            .lane_course_ms
            .map(|ms| format!(", stage 2 {ms:.1} ms"))
            .unwrap_or_default()
    );
    Ok(())
}
