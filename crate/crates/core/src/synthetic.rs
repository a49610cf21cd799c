//! Random ground-truth intersections and the measurements a sensor at their
//! center would see: noisy tracks, Doppler-classified detections, clutter.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{resample_equidistant, Direction2, Point2, Polyline};
use crate::ingest::{classify_doppler, Dataset, Detection, DirectionClass, TrackId, TrackPoint, Trajectory};
use crate::lane_course::{
    all_lanes, lane_borders, share_coincident_lane_borders, Lanelet, LaneletKind, LaneletModel,
};
use crate::mcmc::{chain_rng, derive_seed};
use crate::topology::{Arm, LaneRef, TopologyModel};

/// False detections are spread over this radius around the center.
pub const CLUTTER_RADIUS: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub arm_counts: Vec<usize>,
    pub lanes_per_direction: Vec<usize>,
    /// Smallest angle between adjacent arms, radians.
    pub min_angle: f64,
    /// Gaps are drawn from `[0, max_gap)`.
    pub max_gap: f64,
    pub lane_width: f64,
    /// Length of every lane outward from its arm mouth.
    pub lane_length: f64,
    /// Centers are drawn uniformly from a square of this half-size.
    pub center_spread: f64,
    /// Routes per entering lane are drawn from `1..=max_routes_per_lane`.
    pub max_routes_per_lane: usize,
    /// Distance between consecutive track points.
    pub step: f64,
    pub speed: f64,
    /// Standard deviation of the position noise per axis.
    pub noise_sigma: f64,
    pub clutter_count: usize,
    /// Support point spacing of ground-truth lanelets.
    pub support_spacing: f64,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            arm_counts: vec![3, 4, 5],
            lanes_per_direction: vec![1, 2, 3, 4],
            min_angle: 45f64.to_radians(),
            max_gap: 3.0,
            lane_width: 3.5,
            lane_length: 100.0,
            center_spread: 20.0,
            max_routes_per_lane: 6,
            step: 2.0,
            speed: 10.0,
            noise_sigma: 1.0,
            clutter_count: 20,
            support_spacing: 2.0,
            max_attempts: 100_000,
            seed: 0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.arm_counts.is_empty() || self.arm_counts.iter().any(|&n| n < 2) {
            return bad(format!("arm_counts {:?}", self.arm_counts));
        }
        if self.lanes_per_direction.is_empty() || self.lanes_per_direction.contains(&0) {
            return bad(format!("lanes_per_direction {:?}", self.lanes_per_direction));
        }
        let max_arms = *self.arm_counts.iter().max().expect("non-empty");
        if !(self.min_angle > 0.0) || self.min_angle * max_arms as f64 > TAU {
            return bad(format!("{max_arms} arms cannot be {} rad apart", self.min_angle));
        }
        for (name, v) in [
            ("lane_width", self.lane_width),
            ("lane_length", self.lane_length),
            ("step", self.step),
            ("speed", self.speed),
            ("support_spacing", self.support_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.max_gap >= 0.0) || !(self.noise_sigma >= 0.0) || !(self.center_spread >= 0.0) {
            return bad("max_gap, noise_sigma and center_spread must be non-negative".into());
        }
        if self.max_routes_per_lane == 0 || self.max_attempts == 0 {
            return bad("max_routes_per_lane and max_attempts must be positive".into());
        }
        Ok(())
    }
}

/// The true path through the intersection from one lane to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: LaneRef,
    pub to: LaneRef,
    /// Densely sampled, from the entering lane's mouth to the leaving one's.
    pub center: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub topology: TopologyModel,
    pub connections: Vec<Connection>,
    /// Lanes first, in topology order, then one lanelet per connection.
    pub lanelets: LaneletModel,
}

impl GroundTruth {
    pub fn connection(&self, from: LaneRef, to: LaneRef) -> Option<&Connection> {
        self.connections.iter().find(|c| c.from == from && c.to == to)
    }

    /// Center line of a lane, oriented in travel direction.
    pub fn lane_line(&self, lane: LaneRef, length: f64) -> Polyline {
        self.topology.lane_center_ray(lane, length).line
    }

    /// Full center line of a route: in-lane, connection, out-lane.
    pub fn route_line(&self, from: LaneRef, to: LaneRef, length: f64) -> Result<Polyline> {
        let conn = self
            .connection(from, to)
            .ok_or_else(|| Error::Lanelet(format!("no connection {from:?} -> {to:?}")))?;
        let mut pts = self.lane_line(from, length).into_points();
        pts.extend_from_slice(&conn.center);
        pts.extend(self.lane_line(to, length).into_points());
        Polyline::new_dedup(pts)
    }
}

/// Cubic Hermite curve from `a` heading `ta` to `b` heading `tb`, with
/// tangents scaled to the chord length, sampled at `n + 1` points.
pub fn hermite(a: Point2, ta: Direction2, b: Point2, tb: Direction2, n: usize) -> Vec<Point2> {
    let chord = a.distance(b);
    let (ma, mb) = (ta.as_vector() * chord, tb.as_vector() * chord);
    (0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            let (s2, s3) = (s * s, s * s * s);
            a * (2.0 * s3 - 3.0 * s2 + 1.0)
                + ma * (s3 - 2.0 * s2 + s)
                + b * (-2.0 * s3 + 3.0 * s2)
                + mb * (s3 - s2)
        })
        .collect()
}

fn pick<R: Rng + ?Sized, T: Copy>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

/// Arm headings, sorted, with every adjacent separation at least
/// `min_angle`, by rejection sampling.
fn sample_headings<R: Rng + ?Sized>(n: usize, p: &GenerationParams, rng: &mut R) -> Result<Vec<f64>> {
    for _ in 0..p.max_attempts {
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        h.sort_by(f64::total_cmp);
        let ok = (0..n).all(|i| {
            let next = if i + 1 < n { h[i + 1] } else { h[0] + TAU };
            next - h[i] >= p.min_angle
        });
        if ok {
            return Ok(h);
        }
    }
    Err(Error::GenerationExhausted(p.max_attempts))
}

fn connection_lanelet(
    id: usize,
    conn: &Connection,
    width: f64,
    spacing: f64,
) -> Result<Lanelet> {
    let curve = Polyline::new_dedup(conn.center.clone())?;
    let stations = resample_equidistant(&curve, spacing)?;
    let pts = stations.points();
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, &c) in pts.iter().enumerate() {
        let (a, b) = (pts[i.saturating_sub(1)], pts[(i + 1).min(pts.len() - 1)]);
        let n = Direction2::from_vector(b - a)?.left_normal().as_vector();
        left.push(c + n * (width / 2.0));
        right.push(c - n * (width / 2.0));
    }
    Ok(Lanelet::from_borders(
        id,
        LaneletKind::Connection {
            from: conn.from,
            to: conn.to,
        },
        &left,
        &right,
    ))
}

/// A random intersection: arm count, headings, gaps and lane counts drawn
/// per the parameters, with a connection for every pair of an entering
/// and a leaving lane on different arms.
pub fn generate_intersection<R: Rng + ?Sized>(
    params: &GenerationParams,
    rng: &mut R,
) -> Result<GroundTruth> {
    params.validate()?;
    let n = pick(&params.arm_counts, rng);
    let headings = sample_headings(n, params, rng)?;
    let arms = headings
        .into_iter()
        .map(|h| {
            let gap = rng.random_range(0.0..params.max_gap.max(f64::MIN_POSITIVE));
            let n_in = pick(&params.lanes_per_direction, rng);
            let n_out = pick(&params.lanes_per_direction, rng);
            Arm::new(h, gap, n_in, n_out, params.lane_width)
        })
        .collect();
    let s = params.center_spread;
    let center = if s > 0.0 {
        Point2::new(rng.random_range(-s..s), rng.random_range(-s..s))
    } else {
        Point2::ORIGIN
    };
    let topology = TopologyModel { center, arms };
    build_ground_truth(topology, params)
}

/// Ground-truth lanelets and connections of a fixed topology.
pub fn build_ground_truth(topology: TopologyModel, params: &GenerationParams) -> Result<GroundTruth> {
    let lanes = all_lanes(&topology);
    let mut lanelets = Vec::new();
    for &lane in &lanes {
        let (left, right) = lane_borders(&topology, lane, params.support_spacing, params.lane_length)?;
        lanelets.push(Lanelet::from_borders(lanelets.len(), LaneletKind::Lane(lane), &left, &right));
    }
    let mut connections = Vec::new();
    for &from in lanes.iter().filter(|l| l.direction == DirectionClass::Entering) {
        for &to in lanes.iter().filter(|l| l.direction == DirectionClass::Leaving) {
            if from.arm == to.arm {
                continue;
            }
            let a = topology.lane_center_ray(from, params.lane_length);
            let b = topology.lane_center_ray(to, params.lane_length);
            let center = hermite(a.line.last(), a.travel, b.line.first(), b.travel, 64);
            let conn = Connection { from, to, center };
            let width = topology.arms[from.arm].lanes(from.direction)[from.index].width;
            lanelets.push(connection_lanelet(lanelets.len(), &conn, width, params.support_spacing)?);
            connections.push(conn);
        }
    }
    let mut model = LaneletModel {
        lanelets: lanelets.into_iter().map(Arc::new).collect(),
        assignments: Default::default(),
    };
    share_coincident_lane_borders(&mut model);
    Ok(GroundTruth {
        topology,
        connections,
        lanelets: model,
    })
}

/// One simulated vehicle: the lanes it used and its noiseless track.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub from: LaneRef,
    pub to: LaneRef,
    pub trajectory: Trajectory,
}

/// Between one and `max_routes_per_lane` vehicles per entering lane, each
/// leaving on a uniformly chosen lane of another arm. Every leaving lane that
/// no vehicle chose then gets one vehicle from a uniformly chosen entering
/// lane of another arm, so each lane carries data. Tracks are sampled every
/// `step` meters from a random phase at constant speed.
pub fn simulate_routes<R: Rng + ?Sized>(
    gt: &GroundTruth,
    params: &GenerationParams,
    rng: &mut R,
) -> Result<Vec<Route>> {
    let lanes = all_lanes(&gt.topology);
    let of = |dir: DirectionClass, not_arm: usize| -> Vec<LaneRef> {
        lanes
            .iter()
            .copied()
            .filter(|l| l.direction == dir && l.arm != not_arm)
            .collect()
    };
    let mut out = Vec::new();
    let drive = |from: LaneRef, to: LaneRef, rng: &mut R, out: &mut Vec<Route>| -> Result<()> {
        let line = gt.route_line(from, to, params.lane_length)?;
        let phase = rng.random_range(0.0..params.step);
        let points = line
            .sample_every(phase, params.step)
            .into_iter()
            .enumerate()
            .map(|(k, q)| TrackPoint::new(q, (phase + k as f64 * params.step) / params.speed))
            .collect();
        let id = TrackId::from(out.len());
        out.push(Route {
            from,
            to,
            trajectory: Trajectory::new(id, points)?,
        });
        Ok(())
    };
    for &from in lanes.iter().filter(|l| l.direction == DirectionClass::Entering) {
        let targets = of(DirectionClass::Leaving, from.arm);
        if targets.is_empty() {
            continue;
        }
        for _ in 0..rng.random_range(1..=params.max_routes_per_lane) {
            let to = pick(&targets, rng);
            drive(from, to, rng, &mut out)?;
        }
    }
    for &to in lanes.iter().filter(|l| l.direction == DirectionClass::Leaving) {
        let sources = of(DirectionClass::Entering, to.arm);
        if sources.is_empty() || out.iter().any(|r| r.to == to) {
            continue;
        }
        let from = pick(&sources, rng);
        drive(from, to, rng, &mut out)?;
    }
    Ok(out)
}

pub fn simulate_trajectories<R: Rng + ?Sized>(
    gt: &GroundTruth,
    params: &GenerationParams,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    Ok(simulate_routes(gt, params, rng)?
        .into_iter()
        .map(|r| r.trajectory)
        .collect())
}

/// Isotropic Gaussian displacement of every point; ids and times kept.
pub fn add_noise<R: Rng + ?Sized>(trajectories: &[Trajectory], sigma: f64, rng: &mut R) -> Vec<Trajectory> {
    if sigma == 0.0 {
        return trajectories.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    trajectories
        .iter()
        .map(|t| {
            let moved: Vec<Point2> = t
                .positions()
                .map(|q| q + Point2::new(normal.sample(rng), normal.sample(rng)))
                .collect();
            t.with_positions(moved)
        })
        .collect()
}

/// One detection per point of `measured`, classified by the Doppler speed
/// a sensor at `center` would see for the matching point of `clean`.
pub fn detections_from_tracks(
    clean: &[Trajectory],
    measured: &[Trajectory],
    center: Point2,
) -> Vec<Detection> {
    let mut out = Vec::new();
    for (c, m) in clean.iter().zip(measured) {
        let pts = c.points();
        for (i, (tp, q)) in pts.iter().zip(m.positions()).enumerate() {
            let (a, b) = if i + 1 < pts.len() {
                (&pts[i], &pts[i + 1])
            } else {
                (&pts[i - 1], &pts[i])
            };
            let velocity = (Point2::new(b.x, b.y) - Point2::new(a.x, a.y)) * (1.0 / (b.t - a.t));
            let here = Point2::new(tp.x, tp.y);
            let radial = Direction2::from_vector(here - center).map_or(0.0, |r| velocity.dot(r.as_vector()));
            out.push(Detection {
                position: q,
                timestamp: Some(tp.t),
                heading: crate::ingest::Heading::Class(classify_doppler(radial)),
                doppler: Some(radial),
            });
        }
    }
    out
}

/// Appends `count` false detections at radius `U(0, 80 m)` and a uniform
/// angle around `center`, each with a random Doppler speed and the class
/// it implies.
pub fn add_clutter<R: Rng + ?Sized>(
    mut detections: Vec<Detection>,
    center: Point2,
    count: usize,
    rng: &mut R,
) -> Vec<Detection> {
    for _ in 0..count {
        let r = rng.random_range(0.0..CLUTTER_RADIUS);
        let phi = rng.random_range(0.0..TAU);
        let speed = rng.random_range(0.5..15.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        detections.push(Detection {
            position: center + Point2::new(phi.cos(), phi.sin()) * r,
            timestamp: None,
            heading: crate::ingest::Heading::Class(classify_doppler(speed)),
            doppler: Some(speed),
        });
    }
    detections
}

/// A ground truth with its simulated measurements.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: GroundTruth,
    pub routes: Vec<Route>,
    pub dataset: Dataset,
}

/// Seed of scenario `index` in a suite started from `base`.
pub fn scenario_seed(base: u64, index: u64) -> u64 {
    derive_seed(base, index)
}

/// Ground truth, noisy tracks, and Doppler detections with clutter, all
/// from `seed`. The dataset records the true center for track splitting.
pub fn generate_scenario(params: &GenerationParams, seed: u64) -> Result<Scenario> {
    let mut rng = chain_rng(seed);
    let truth = generate_intersection(params, &mut rng)?;
    let routes = simulate_routes(&truth, params, &mut rng)?;
    let clean: Vec<Trajectory> = routes.iter().map(|r| r.trajectory.clone()).collect();
    let noisy = add_noise(&clean, params.noise_sigma, &mut rng);
    let center = truth.topology.center;
    let detections = add_clutter(
        detections_from_tracks(&clean, &noisy, center),
        center,
        params.clutter_count,
        &mut rng,
    );
    let meta = serde_json::json!({ "seed": seed, "generation": params });
    Ok(Scenario {
        truth,
        routes,
        dataset: Dataset {
            detections,
            trajectories: noisy,
            center: Some(center),
            meta: Some(meta),
        },
    })
}
