use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use crossroads::synthetic::{generate_scenario, scenario_seed, GroundTruth};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{write_json, write_text, ConfigArgs, RunConfig};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory receiving one dataset and one ground-truth file per intersection.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Ground-truth file contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub index: usize,
    /// Seed the intersection and its measurements were drawn from.
    pub seed: u64,
    pub config: RunConfig,
    pub truth: GroundTruth,
}

pub fn file_stem(index: usize) -> String {
    format!("intersection_{index:04}")
}

pub fn dataset_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{}.dataset.json", file_stem(index)))
}

pub fn truth_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{}.truth.json", file_stem(index)))
}

/// Writes intersection `index` of the suite seeded by `cfg.seed`.
fn write_one(dir: &Path, index: usize, cfg: &RunConfig) -> Result<()> {
    let seed = scenario_seed(cfg.seed, index as u64);
    let scenario = generate_scenario(&cfg.generation, seed)
        .with_context(|| format!("generating intersection {index}"))?;
    let mut dataset = scenario.dataset;
    dataset.meta = Some(json!({ "index": index, "seed": seed, "config": cfg }));
    let mut text = dataset.to_json_string()?;
    text.push('\n');
    write_text(&dataset_path(dir, index), &text)?;
    write_json(
        &truth_path(dir, index),
        &TruthFile {
            index,
            seed,
            config: cfg.clone(),
            truth: scenario.truth,
        },
    )
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()?;
    pool.install(|| {
        (0..args.count)
            .into_par_iter()
            .try_for_each(|i| write_one(&args.out, i, &cfg))
    })?;
    println!("wrote {} intersections to {}", args.count, args.out.display());
    Ok(())
}
