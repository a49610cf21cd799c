use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Args;
use crossroads::geometry::Point2;
use crossroads::pipeline::{InputMode, PipelineConfig};
use crossroads::synthetic::GenerationParams;
use serde::{Deserialize, Serialize};

/// Everything a run depends on. Embedded verbatim in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub mode: InputMode,
    pub pipeline: PipelineConfig,
    pub generation: GenerationParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            parallelism: 1,
            mode: InputMode::Tracked,
            pipeline: PipelineConfig::default(),
            generation: GenerationParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        self.pipeline.validate()?;
        self.generation.validate()?;
        Ok(())
    }
}

/// Flags shared by every subcommand. Flags override the config file, which
/// overrides the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config document; missing fields keep their defaults.
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for batch commands.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long = "stage1-samples")]
    pub stage1_samples: Option<usize>,
    #[arg(long = "stage2-samples")]
    pub stage2_samples: Option<usize>,
    /// Lateral deviation of stage-1 measurements, meters.
    #[arg(long = "sigma-perp")]
    pub sigma_perp: Option<f64>,
    /// Angular deviation of stage-1 headings, degrees.
    #[arg(long = "sigma-ang")]
    pub sigma_ang: Option<f64>,
    /// Weight of the border sharing reward in stage 2.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Tracked,
    Raw,
}

impl From<ModeArg> for InputMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tracked => InputMode::Tracked,
            ModeArg::Raw => InputMode::Raw,
        }
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        if let Some(n) = self.stage1_samples {
            cfg.pipeline.topology.n_samples = n;
        }
        if let Some(n) = self.stage2_samples {
            cfg.pipeline.lane_course.n_samples = n;
        }
        if let Some(s) = self.sigma_perp {
            cfg.pipeline.topology.sigma_perp = s;
        }
        if let Some(deg) = self.sigma_ang {
            cfg.pipeline.topology.sigma_ang = deg.to_radians();
        }
        if let Some(t) = self.tau {
            cfg.pipeline.lane_course.tau = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `x,y`.
pub fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let p = Point2::new(parse(x)?, parse(y)?);
    if !p.is_finite() {
        return Err(format!("non-finite point {s:?}"));
    }
    Ok(p)
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
