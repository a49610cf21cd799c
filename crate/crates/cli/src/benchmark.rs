use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use crossroads::evaluation::{aggregate, lane_course_report, topology_report, IntersectionReport, SuiteSummary};
use crossroads::mcmc::derive_seed;
use crossroads::pipeline::{estimate, InputMode, PipelineConfig, Timings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{read_text, write_json, write_text, ConfigArgs, RunConfig};
use crate::estimate::load_dataset;
use crate::generate::TruthFile;

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Directory of `<name>.dataset.json` and `<name>.truth.json` pairs.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for report.csv, report.json and, with --curve, curve.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Stage-1 sample counts for a samples-vs-accuracy curve.
    #[arg(long, value_delimiter = ',')]
    pub curve: Vec<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

struct Case {
    name: String,
    dataset: PathBuf,
    truth: PathBuf,
}

fn find_cases(dir: &Path) -> Result<Vec<Case>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut cases = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".dataset.json"))
        else {
            continue;
        };
        let truth = dir.join(format!("{name}.truth.json"));
        if truth.is_file() {
            cases.push(Case {
                name: name.to_string(),
                dataset: path.clone(),
                truth,
            });
        }
    }
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    if cases.is_empty() {
        bail!("no dataset/truth pairs in {}", dir.display());
    }
    Ok(cases)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub seed: u64,
    pub report: Option<IntersectionReport>,
    pub timings: Option<Timings>,
    pub error: Option<String>,
}

/// Estimation seeds derive from the run seed and the generator index, so a
/// suite generated and benchmarked with the same seed reuses each
/// intersection's own seed. Unreadable cases fall back to their position.
fn evaluate(case: &Case, position: usize, run_seed: u64, pipeline: &PipelineConfig, mode: InputMode) -> Row {
    let mut row = Row {
        name: case.name.clone(),
        seed: derive_seed(run_seed, position as u64),
        report: None,
        timings: None,
        error: None,
    };
    let result = (|| -> Result<(IntersectionReport, Timings)> {
        let dataset = load_dataset(&case.dataset)?;
        let truth: TruthFile = serde_json::from_str(&read_text(&case.truth)?)
            .with_context(|| format!("parsing {}", case.truth.display()))?;
        row.seed = derive_seed(run_seed, truth.index as u64);
        let est = estimate(&dataset, mode, pipeline, row.seed, None)?;
        let topology = topology_report(&est.topology, &truth.truth.topology);
        let lane_course = est
            .lanelets
            .as_ref()
            .map(|m| lane_course_report(m, &est.topology, &truth.truth, true));
        Ok((IntersectionReport { topology, lane_course }, est.timings))
    })();
    match result {
        Ok((report, timings)) => {
            row.report = Some(report);
            row.timings = Some(timings);
        }
        Err(e) => row.error = Some(format!("{e:#}")),
    }
    row
}

fn run_all(cases: &[Case], cfg: &RunConfig, pipeline: &PipelineConfig) -> Result<Vec<Row>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()?;
    Ok(pool.install(|| {
        cases
            .par_iter()
            .enumerate()
            .map(|(i, c)| evaluate(c, i, cfg.seed, pipeline, cfg.mode))
            .collect()
    }))
}

fn summarize(rows: &[Row]) -> SuiteSummary {
    let reports: Vec<IntersectionReport> = rows.iter().filter_map(|r| r.report.clone()).collect();
    aggregate(&reports)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "name,seed,arm_count_correct,lane_level_correct,center_error_m,mean_angle_error_deg,\
         mean_lane_deviation_m,evaluated_lanelets,topology_ms,lane_course_ms,error\n",
    );
    for r in rows {
        let t = r.report.as_ref().map(|rep| &rep.topology);
        let lc = r.report.as_ref().and_then(|rep| rep.lane_course.as_ref());
        let evaluated = lc.map(|l| l.per_lane_deviation.len());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            r.seed,
            t.map(|t| t.arm_count_correct.to_string()).unwrap_or_default(),
            t.map(|t| t.lane_level_correct.to_string()).unwrap_or_default(),
            opt(t.map(|t| t.center_error)),
            opt(t.map(|t| t.mean_angle_error.to_degrees())),
            opt(lc.filter(|l| !l.per_lane_deviation.is_empty()).map(|l| l.mean_deviation)),
            evaluated.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.timings.map(|t| t.topology_ms)),
            opt(r.timings.and_then(|t| t.lane_course_ms)),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub samples: usize,
    pub summary: SuiteSummary,
    pub mean_topology_ms: f64,
}

fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from(
        "samples,arm_count_accuracy,lane_level_accuracy,mean_center_error_m,mean_angle_error_deg,mean_topology_ms\n",
    );
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.6},{:.6},{:.3}",
            p.samples,
            p.summary.arm_count_accuracy,
            p.summary.lane_level_accuracy,
            p.summary.mean_center_error,
            p.summary.mean_angle_error.to_degrees(),
            p.mean_topology_ms
        );
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub config: RunConfig,
    pub summary: SuiteSummary,
    pub failures: usize,
    pub rows: Vec<Row>,
    pub curve: Vec<CurvePoint>,
}

pub fn run(args: &BenchmarkArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let cases = find_cases(&args.data)?;
    let rows = run_all(&cases, &cfg, &cfg.pipeline)?;

    let mut curve = Vec::new();
    for &samples in &args.curve {
        let mut pipeline = cfg.pipeline.clone();
        pipeline.topology.n_samples = samples;
        pipeline.run_lane_course = false;
        let rows = run_all(&cases, &cfg, &pipeline)?;
        let times: Vec<f64> = rows.iter().filter_map(|r| r.timings.map(|t| t.topology_ms)).collect();
        curve.push(CurvePoint {
            samples,
            summary: summarize(&rows),
            mean_topology_ms: times.iter().sum::<f64>() / times.len().max(1) as f64,
        });
    }

    let report = BenchmarkReport {
        seed: cfg.seed,
        summary: summarize(&rows),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        config: cfg,
        rows,
        curve,
    };
    let header = format!("# seed {} config {}\n", report.seed, serde_json::to_string(&report.config)?);
    write_text(&args.out.join("report.csv"), &(header.clone() + &rows_csv(&report.rows)))?;
    if !report.curve.is_empty() {
        write_text(&args.out.join("curve.csv"), &(header + &curve_csv(&report.curve)))?;
    }
    write_json(&args.out.join("report.json"), &report)?;
    let s = &report.summary;
    println!(
        "{} intersections ({} failed): arm count {:.1}%, lane level {:.1}%, center {:.2} m, angle {:.2} deg{}",
        report.rows.len(),
        report.failures,
        s.arm_count_accuracy,
        s.lane_level_accuracy,
        s.mean_center_error,
        s.mean_angle_error.to_degrees(),
        s.mean_lane_deviation
            .map(|d| format!(", lane deviation {d:.3} m"))
            .unwrap_or_default()
    );
    Ok(())
}
