//! Measurements and their preprocessing.
//!
//! Raw detections carry either a coarse entering/leaving class or an
//! orientation vector. Tracked input arrives as trajectories, which are cut
//! at their closest approach to the intersection center and reduced to one
//! weighted summary per part.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Direction2, Point2};

/// Detections slower than this are treated as static clutter.
pub const DEFAULT_MIN_DOPPLER: f64 = 0.5;
pub const DEFAULT_VOXEL_CELL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionClass {
    Entering,
    Leaving,
}

impl DirectionClass {
    pub fn opposite(self) -> Self {
        match self {
            DirectionClass::Entering => DirectionClass::Leaving,
            DirectionClass::Leaving => DirectionClass::Entering,
        }
    }
}

impl fmt::Display for DirectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionClass::Entering => "entering",
            DirectionClass::Leaving => "leaving",
        })
    }
}

/// Radar heuristic: positive radial velocity means the target moves away.
pub fn classify_doppler(v_doppler: f64) -> DirectionClass {
    if v_doppler > 0.0 {
        DirectionClass::Leaving
    } else {
        DirectionClass::Entering
    }
}

/// Direction information of a single detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heading {
    Class(DirectionClass),
    Orientation(Direction2),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub position: Point2,
    pub timestamp: Option<f64>,
    pub heading: Heading,
    pub doppler: Option<f64>,
}

impl Detection {
    pub fn with_class(position: Point2, class: DirectionClass) -> Self {
        Detection {
            position,
            timestamp: None,
            heading: Heading::Class(class),
            doppler: None,
        }
    }

    pub fn with_orientation(position: Point2, orientation: Direction2) -> Self {
        Detection {
            position,
            timestamp: None,
            heading: Heading::Orientation(orientation),
            doppler: None,
        }
    }

    pub fn class(&self) -> Option<DirectionClass> {
        match self.heading {
            Heading::Class(c) => Some(c),
            Heading::Orientation(_) => None,
        }
    }

    pub fn orientation(&self) -> Option<Direction2> {
        match self.heading {
            Heading::Orientation(o) => Some(o),
            Heading::Class(_) => None,
        }
    }
}

/// Track identifier; numeric ids in files are kept as their decimal text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "RawId", into = "String")]
pub struct TrackId(pub String);

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Num(u64),
    Text(String),
}

impl From<RawId> for TrackId {
    fn from(r: RawId) -> Self {
        match r {
            RawId::Num(n) => TrackId(n.to_string()),
            RawId::Text(s) => TrackId(s),
        }
    }
}

impl From<TrackId> for String {
    fn from(id: TrackId) -> Self {
        id.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrackId {
    fn from(s: &str) -> Self {
        TrackId(s.to_owned())
    }
}

impl From<usize> for TrackId {
    fn from(n: usize) -> Self {
        TrackId(n.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<Direction2>,
}

impl TrackPoint {
    pub fn new(position: Point2, t: f64) -> Self {
        TrackPoint {
            x: position.x,
            y: position.y,
            t,
            heading: None,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// A time-ordered track of one object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    id: TrackId,
    points: Vec<TrackPoint>,
}

impl Trajectory {
    /// At least two points with strictly increasing timestamps.
    pub fn new(id: TrackId, points: Vec<TrackPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Measurement(format!(
                "trajectory {id} has {} points, needs at least 2",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()) {
                return Err(Error::Measurement(format!(
                    "trajectory {id} point {i} is not finite"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Measurement(format!(
                "trajectory {id}: timestamps not strictly increasing at point {}",
                i + 1
            )));
        }
        Ok(Trajectory { id, points })
    }

    pub fn id(&self) -> &TrackId {
        &self.id
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.points.iter().map(TrackPoint::position)
    }

    /// Same track with new positions; timestamps and id are kept.
    pub fn with_positions(&self, positions: impl IntoIterator<Item = Point2>) -> Trajectory {
        let points = self
            .points
            .iter()
            .zip(positions)
            .map(|(p, q)| TrackPoint {
                x: q.x,
                y: q.y,
                ..*p
            })
            .collect();
        Trajectory {
            id: self.id.clone(),
            points,
        }
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            id: TrackId,
            points: Vec<TrackPoint>,
        }
        let raw = Raw::deserialize(d)?;
        Trajectory::new(raw.id, raw.points).map_err(serde::de::Error::custom)
    }
}

/// One side of a split trajectory. May hold fewer than two points.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPart {
    pub id: TrackId,
    pub points: Vec<TrackPoint>,
}

impl TrackPart {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn mean_position(&self) -> Option<Point2> {
        let positions: Vec<Point2> = self.points.iter().map(TrackPoint::position).collect();
        Point2::mean(&positions)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySplit {
    pub incoming: TrackPart,
    pub outgoing: TrackPart,
    /// Index of the closest point to the center in the original track.
    pub split_index: usize,
}

/// Cuts `t` at its point of closest approach to `center`. The incoming part
/// ends with that point; the outgoing part holds the rest.
pub fn split_trajectory(t: &Trajectory, center: Point2) -> TrajectorySplit {
    let split_index = t
        .points
        .iter()
        .map(|p| p.position().distance(center))
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
        .0;
    let (inc, out) = t.points.split_at(split_index + 1);
    TrajectorySplit {
        incoming: TrackPart {
            id: t.id.clone(),
            points: inc.to_vec(),
        },
        outgoing: TrackPart {
            id: t.id.clone(),
            points: out.to_vec(),
        },
        split_index,
    }
}

/// A trajectory part reduced to its mean point and mean heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub mean_position: Point2,
    pub mean_direction: Direction2,
    pub direction_class: DirectionClass,
    pub source_id: TrackId,
    pub weight: usize,
}

/// Mean position, circular-mean step heading, and whether the part moves
/// toward `center` (entering) or away from it (leaving).
pub fn reduce_track(part: &TrackPart, center: Point2) -> Result<TrackSummary> {
    if part.points.len() < 2 {
        return Err(Error::Measurement(format!(
            "part of trajectory {} has {} points, need 2 to derive a heading",
            part.id,
            part.points.len()
        )));
    }
    let mean_position = part.mean_position().expect("non-empty part");
    let steps = part
        .points
        .windows(2)
        .filter_map(|w| Direction2::from_vector(w[1].position() - w[0].position()).ok());
    let mean_direction = Direction2::circular_mean(steps).ok_or_else(|| {
        Error::Measurement(format!("part of trajectory {} has no net heading", part.id))
    })?;
    let first = part.points[0].position().distance(center);
    let last = part.points[part.points.len() - 1].position().distance(center);
    let direction_class = if last < first {
        DirectionClass::Entering
    } else {
        DirectionClass::Leaving
    };
    Ok(TrackSummary {
        mean_position,
        mean_direction,
        direction_class,
        source_id: part.id.clone(),
        weight: part.points.len(),
    })
}

/// Splits every trajectory at `center` and summarizes each part that has a
/// derivable heading. Parts that are too short are dropped.
pub fn summarize_trajectories(trajectories: &[Trajectory], center: Point2) -> Vec<TrackSummary> {
    trajectories
        .iter()
        .flat_map(|t| {
            let split = split_trajectory(t, center);
            [split.incoming, split.outgoing]
        })
        .filter_map(|part| reduce_track(&part, center).ok())
        .collect()
}

/// Drops detections whose Doppler speed marks them as static.
pub fn filter_static(detections: Vec<Detection>, min_speed: f64) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| d.doppler.is_none_or(|v| v.abs() >= min_speed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum VoxelKind {
    Class(DirectionClass),
    /// Orientation quadrant, so opposing traffic never gets averaged.
    Quadrant(u8),
}

fn voxel_kind(h: &Heading) -> VoxelKind {
    match h {
        Heading::Class(c) => VoxelKind::Class(*c),
        Heading::Orientation(o) => {
            let q = (o.angle() / std::f64::consts::FRAC_PI_2).floor() as u8;
            VoxelKind::Quadrant(q.min(3))
        }
    }
}

/// Merges detections that fall in the same grid cell and share a direction
/// class (or orientation quadrant) into one detection at their mean.
pub fn voxelize(detections: &[Detection], cell: f64) -> Vec<Detection> {
    assert!(cell > 0.0, "voxel cell must be positive");
    let mut groups: BTreeMap<(i64, i64, VoxelKind), Vec<&Detection>> = BTreeMap::new();
    for d in detections {
        let key = (
            (d.position.x / cell).floor() as i64,
            (d.position.y / cell).floor() as i64,
            voxel_kind(&d.heading),
        );
        groups.entry(key).or_default().push(d);
    }
    groups.into_values().map(merge_group).collect()
}

fn merge_group(group: Vec<&Detection>) -> Detection {
    if let [only] = group.as_slice() {
        return (*only).clone();
    }
    let n = group.len() as f64;
    let position = Point2::mean(group.iter().map(|d| &d.position)).expect("non-empty");
    let heading = match group[0].heading {
        Heading::Class(c) => Heading::Class(c),
        Heading::Orientation(first) => Heading::Orientation(
            Direction2::circular_mean(group.iter().filter_map(|d| d.orientation()))
                .unwrap_or(first),
        ),
    };
    let mean_of = |f: fn(&Detection) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = group.iter().map(|d| f(d)).collect();
        vals.map(|v| v.iter().sum::<f64>() / n)
    };
    Detection {
        position,
        timestamp: mean_of(|d| d.timestamp),
        heading,
        doppler: mean_of(|d| d.doppler),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawDetection {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dir: Option<DirectionClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heading: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doppler: Option<f64>,
}

impl RawDetection {
    fn into_detection(self, index: usize) -> Result<Detection> {
        let ctx = |msg: String| Error::Measurement(format!("detections[{index}]: {msg}"));
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(ctx("non-finite position".into()));
        }
        let heading = match (self.dir, self.heading, self.doppler) {
            (Some(_), Some(_), _) => {
                return Err(ctx("both `dir` and `heading` given".into()));
            }
            (Some(c), None, _) => Heading::Class(c),
            (None, Some([dx, dy]), _) => Heading::Orientation(
                Direction2::new(dx, dy).map_err(|e| ctx(format!("`heading`: {e}")))?,
            ),
            (None, None, Some(v)) if v.is_finite() => Heading::Class(classify_doppler(v)),
            (None, None, _) => {
                return Err(ctx("needs one of `dir`, `heading` or `doppler`".into()));
            }
        };
        Ok(Detection {
            position: Point2::new(self.x, self.y),
            timestamp: self.t,
            heading,
            doppler: self.doppler,
        })
    }

    fn from_detection(d: &Detection) -> Self {
        let (dir, heading) = match d.heading {
            Heading::Class(c) => (Some(c), None),
            Heading::Orientation(o) => (None, Some([o.dx(), o.dy()])),
        };
        RawDetection {
            x: d.position.x,
            y: d.position.y,
            t: d.timestamp,
            dir,
            heading,
            doppler: d.doppler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawDataset {
    #[serde(default)]
    detections: Vec<RawDetection>,
    #[serde(default)]
    trajectories: Vec<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Contents of a measurement file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub trajectories: Vec<Trajectory>,
    /// Known intersection center used to split tracks before any model
    /// exists (recorded by the generator, or supplied for real data).
    pub center: Option<Point2>,
    /// Free-form provenance: seed and resolved configuration.
    pub meta: Option<serde_json::Value>,
}

impl Dataset {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawDataset = serde_json::from_str(s)?;
        let detections = raw
            .detections
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.into_detection(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            detections,
            trajectories: raw.trajectories,
            center: raw.center,
            meta: raw.meta,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw = RawDataset {
            detections: self.detections.iter().map(RawDetection::from_detection).collect(),
            trajectories: self.trajectories.clone(),
            center: self.center,
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    /// Detections after static filtering and voxelization.
    pub fn preprocessed_detections(&self, cell: f64, min_doppler: f64) -> Vec<Detection> {
        voxelize(&filter_static(self.detections.clone(), min_doppler), cell)
    }
}
