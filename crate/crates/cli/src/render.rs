use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use crossroads::geometry::Point2;
use crossroads::ingest::Dataset;
use crossroads::lane_course::LaneletModel;
use crossroads::topology::TopologyModel;
use serde_json::{json, Value};

use crate::config::{read_text, write_text};
use crate::estimate::{load_dataset, LaneletFile, TopologyFile};
use crate::generate::TruthFile;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
    /// Measurement file: detections and trajectories.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Ground-truth file written by `generate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// topology.json written by `estimate`.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    /// lanelets.json written by `estimate`.
    #[arg(long)]
    pub lanelets: Option<PathBuf>,
}

/// What can be drawn, all in world coordinates.
#[derive(Debug, Default)]
pub struct Scene {
    pub dataset: Option<Dataset>,
    pub truth: Option<LaneletModel>,
    pub topology: Option<(TopologyModel, f64)>,
    pub lanelets: Option<LaneletModel>,
    /// Seeds and configs of the inputs, copied into the drawing.
    pub sources: Value,
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

impl Scene {
    pub fn load(args: &RenderArgs) -> Result<Scene> {
        let mut scene = Scene {
            sources: json!({}),
            ..Scene::default()
        };
        if let Some(p) = &args.dataset {
            let d = load_dataset(p)?;
            scene.sources["dataset"] = d.meta.clone().unwrap_or(Value::Null);
            scene.dataset = Some(d);
        }
        if let Some(p) = &args.truth {
            let t: TruthFile = parse(p)?;
            scene.sources["truth"] = json!({ "seed": t.seed, "config": t.config });
            scene.truth = Some(t.truth.lanelets);
        }
        if let Some(p) = &args.topology {
            let t: TopologyFile = parse(p)?;
            scene.sources["topology"] = json!({ "seed": t.seed, "config": t.config });
            let length = t.config.pipeline.topology.ray_length;
            scene.topology = Some((t.topology, length));
        }
        if let Some(p) = &args.lanelets {
            let l: LaneletFile = parse(p)?;
            scene.sources["lanelets"] = json!({ "seed": l.seed, "config": l.config });
            scene.lanelets = Some(l.lanelets);
        }
        Ok(scene)
    }
}

struct Layer {
    id: &'static str,
    style: &'static str,
    dots: Vec<Point2>,
    lines: Vec<Vec<Point2>>,
}

impl Layer {
    fn new(id: &'static str, style: &'static str) -> Self {
        Layer {
            id,
            style,
            dots: Vec::new(),
            lines: Vec::new(),
        }
    }
}

fn lanelet_lines(model: &LaneletModel, layer: &mut Layer, borders: bool) {
    for l in &model.lanelets {
        if borders {
            layer.lines.push(l.left.iter().map(|p| p.position).collect());
            layer.lines.push(l.right.iter().map(|p| p.position).collect());
        }
        layer.lines.push(l.center.points.clone());
    }
}

fn layers(scene: &Scene) -> Vec<Layer> {
    let mut detections = Layer::new("detections", r##"fill="#9a9a9a" stroke="none""##);
    let mut trajectories = Layer::new("trajectories", r##"fill="none" stroke="#4a7fb5" stroke-width="0.3""##);
    let mut estimate = Layer::new("estimate", r##"fill="none" stroke="#c0392b" stroke-width="0.4""##);
    let mut truth = Layer::new("ground-truth", r##"fill="none" stroke="#27ae60" stroke-width="0.4" stroke-dasharray="2 1""##);
    if let Some(d) = &scene.dataset {
        detections.dots = d.detections.iter().map(|d| d.position).collect();
        trajectories.lines = d.trajectories.iter().map(|t| t.positions().collect()).collect();
    }
    if let Some((topo, length)) = &scene.topology {
        for ray in topo.lane_rays(*length) {
            estimate.lines.push(ray.line.points().to_vec());
        }
        estimate.dots.push(topo.center);
    }
    if let Some(m) = &scene.lanelets {
        lanelet_lines(m, &mut estimate, true);
    }
    if let Some(m) = &scene.truth {
        lanelet_lines(m, &mut truth, false);
    }
    vec![detections, trajectories, truth, estimate]
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// SVG 1.1 document. World y points up; the drawing flips it.
pub fn render_svg(scene: &Scene) -> String {
    let layers = layers(scene);
    let points = layers
        .iter()
        .flat_map(|l| l.dots.iter().chain(l.lines.iter().flatten()))
        .filter(|p| p.is_finite());
    let mut bounds: Option<(f64, f64, f64, f64)> = None;
    for p in points {
        let b = bounds.get_or_insert((p.x, p.y, p.x, p.y));
        *b = (b.0.min(p.x), b.1.min(p.y), b.2.max(p.x), b.3.max(p.y));
    }
    let margin = 5.0;
    let (x0, y0, x1, y1) = bounds.unwrap_or((0.0, 0.0, 100.0, 100.0));
    let (w, h) = (x1 - x0 + 2.0 * margin, y1 - y0 + 2.0 * margin);
    let map = |p: Point2| (num(p.x - x0 + margin), num(y1 - p.y + margin));

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {} {}" width="{}" height="{}">"#,
        num(w),
        num(h),
        num(w * 4.0),
        num(h * 4.0)
    );
    let meta = serde_json::to_string(&scene.sources).unwrap_or_default();
    let _ = writeln!(out, "<metadata>{}</metadata>", xml_escape(&meta));
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, num(w), num(h));
    for layer in &layers {
        let _ = writeln!(out, r#"<g id="{}" {}>"#, layer.id, layer.style);
        for &p in &layer.dots {
            let (x, y) = map(p);
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="0.35"/>"#);
        }
        for line in &layer.lines {
            if line.len() < 2 {
                continue;
            }
            let pts: Vec<String> = line
                .iter()
                .map(|&p| {
                    let (x, y) = map(p);
                    format!("{x},{y}")
                })
                .collect();
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, pts.join(" "));
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn run(args: &RenderArgs) -> Result<()> {
    let scene = Scene::load(args)?;
    write_text(&args.out, &render_svg(&scene))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
