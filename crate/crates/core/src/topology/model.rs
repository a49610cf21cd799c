use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_distance, normalize_angle, Direction2, Point2, Polyline};
use crate::ingest::DirectionClass;

/// Lane rays never start closer to the center than this.
pub const MIN_MOUTH_DISTANCE: f64 = 4.0;
/// Clearance added beyond the point where neighbouring arms stop overlapping.
pub const MOUTH_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub direction: DirectionClass,
    pub width: f64,
    /// Position counted outward from the gap, 0 is next to it.
    pub offset_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    /// Absolute world heading pointing away from the center, in `[0, 2π)`.
    pub heading: f64,
    pub gap: f64,
    pub lanes_in: Vec<Lane>,
    pub lanes_out: Vec<Lane>,
}

impl Arm {
    pub fn new(heading: f64, gap: f64, n_in: usize, n_out: usize, width: f64) -> Arm {
        let lanes = |direction, n| {
            (0..n)
                .map(|offset_index| Lane {
                    direction,
                    width,
                    offset_index,
                })
                .collect()
        };
        Arm {
            heading: normalize_angle(heading),
            gap,
            lanes_in: lanes(DirectionClass::Entering, n_in),
            lanes_out: lanes(DirectionClass::Leaving, n_out),
        }
    }

    pub fn lanes(&self, direction: DirectionClass) -> &[Lane] {
        match direction {
            DirectionClass::Entering => &self.lanes_in,
            DirectionClass::Leaving => &self.lanes_out,
        }
    }

    pub fn lanes_mut(&mut self, direction: DirectionClass) -> &mut Vec<Lane> {
        match direction {
            DirectionClass::Entering => &mut self.lanes_in,
            DirectionClass::Leaving => &mut self.lanes_out,
        }
    }

    pub fn lane_count(&self) -> usize {
        self.lanes_in.len() + self.lanes_out.len()
    }

    /// Outward unit axis.
    pub fn axis(&self) -> Direction2 {
        Direction2::from_angle(self.heading)
    }

    /// Signed lateral offset of a lane center along the outward right
    /// normal. Leaving lanes lie on the positive side, entering lanes on the
    /// negative side, as in right-hand traffic.
    pub fn lateral_offset(&self, direction: DirectionClass, index: usize) -> f64 {
        let lanes = self.lanes(direction);
        let inner: f64 = lanes[..index].iter().map(|l| l.width).sum();
        let magnitude = self.gap / 2.0 + inner + lanes[index].width / 2.0;
        match direction {
            DirectionClass::Entering => -magnitude,
            DirectionClass::Leaving => magnitude,
        }
    }

    /// Distance from the axis to the outer border on one side.
    pub fn half_width(&self, direction: DirectionClass) -> f64 {
        self.gap / 2.0 + self.lanes(direction).iter().map(|l| l.width).sum::<f64>()
    }

    fn renumber(&mut self) {
        for lanes in [&mut self.lanes_in, &mut self.lanes_out] {
            for (i, l) in lanes.iter_mut().enumerate() {
                l.offset_index = i;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneRef {
    pub arm: usize,
    pub direction: DirectionClass,
    pub index: usize,
}

/// Straight lane center ray with its travel direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneRay {
    pub lane: LaneRef,
    /// Oriented in travel direction: entering rays end at the mouth,
    /// leaving rays start there.
    pub line: Polyline,
    pub travel: Direction2,
    pub offset: f64,
}

/// Coarse intersection: a center and arms sorted by heading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyModel {
    pub center: Point2,
    pub arms: Vec<Arm>,
}

impl TopologyModel {
    /// Four arms at right angles with one lane per direction each.
    pub fn initial(center: Point2, gap: f64, width: f64) -> TopologyModel {
        TopologyModel {
            center,
            arms: (0..4)
                .map(|k| Arm::new(k as f64 * FRAC_PI_2, gap, 1, 1, width))
                .collect(),
        }
    }

    pub fn lane_count(&self) -> usize {
        self.arms.iter().map(Arm::lane_count).sum()
    }

    pub fn sort_arms(&mut self) {
        for a in &mut self.arms {
            a.heading = normalize_angle(a.heading);
            a.renumber();
        }
        self.arms.sort_by(|a, b| a.heading.total_cmp(&b.heading));
    }

    /// Angular separation between arm `i` and the next arm counterclockwise.
    pub fn separation_after(&self, i: usize) -> f64 {
        let n = self.arms.len();
        let a = self.arms[i].heading;
        let b = self.arms[(i + 1) % n].heading;
        if n == 1 {
            2.0 * PI
        } else {
            normalize_angle(b - a)
        }
    }

    pub fn min_separation(&self) -> f64 {
        (0..self.arms.len())
            .map(|i| self.separation_after(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Structural invariants of a sampled model.
    pub fn check(&self, min_arms: usize, min_arm_angle: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("topology model: {msg}")));
        if !self.center.is_finite() {
            return bad("non-finite center".into());
        }
        if self.arms.len() < min_arms {
            return bad(format!("{} arms, need {min_arms}", self.arms.len()));
        }
        for (i, a) in self.arms.iter().enumerate() {
            if !(0.0..2.0 * PI).contains(&a.heading) {
                return bad(format!("arm {i} heading {} outside [0, 2π)", a.heading));
            }
            if !(a.gap >= 0.0) || !a.gap.is_finite() {
                return bad(format!("arm {i} gap {}", a.gap));
            }
            if a.lane_count() == 0 {
                return bad(format!("arm {i} has no lanes"));
            }
            if a.lanes_in.iter().chain(&a.lanes_out).any(|l| !(l.width > 0.0)) {
                return bad(format!("arm {i} has a lane of non-positive width"));
            }
        }
        if self.arms.windows(2).any(|w| w[0].heading > w[1].heading) {
            return bad("arms not sorted by heading".into());
        }
        // tolerance: a split places copies exactly min_arm_angle apart
        if self.arms.len() >= 2 && self.min_separation() < min_arm_angle - 1e-9 {
            return bad(format!(
                "adjacent arms {:.2}° apart",
                self.min_separation().to_degrees()
            ));
        }
        Ok(())
    }

    /// Distance from the center at which the lanes of arm `i` begin: far
    /// enough that neither neighbouring arm's lanes overlap them.
    pub fn mouth_distance(&self, i: usize) -> f64 {
        let n = self.arms.len();
        let mut d = MIN_MOUTH_DISTANCE;
        if n < 2 {
            return d;
        }
        let arm = &self.arms[i];
        let ccw = (i + 1) % n;
        let cw = (i + n - 1) % n;
        // The ccw side of an arm carries its entering lanes, the cw side its
        // leaving lanes.
        let sides = [
            (
                self.separation_after(i),
                arm.half_width(DirectionClass::Entering),
                self.arms[ccw].half_width(DirectionClass::Leaving),
            ),
            (
                self.separation_after(cw),
                arm.half_width(DirectionClass::Leaving),
                self.arms[cw].half_width(DirectionClass::Entering),
            ),
        ];
        for (theta, h_own, h_other) in sides {
            if theta < PI {
                d = d.max(h_own.max(h_other) / (theta / 2.0).tan() + MOUTH_MARGIN);
            }
        }
        d
    }

    /// Every lane's center ray, lanes of each arm in (entering, leaving)
    /// order from the gap outward.
    pub fn lane_rays(&self, ray_length: f64) -> Vec<LaneRay> {
        let mut out = Vec::with_capacity(self.lane_count());
        for (i, arm) in self.arms.iter().enumerate() {
            let mouth = self.mouth_distance(i);
            for direction in [DirectionClass::Entering, DirectionClass::Leaving] {
                for index in 0..arm.lanes(direction).len() {
                    out.push(self.ray_with_mouth(i, direction, index, mouth, ray_length));
                }
            }
        }
        out
    }

    pub fn lane_center_ray(&self, lane: LaneRef, ray_length: f64) -> LaneRay {
        let mouth = self.mouth_distance(lane.arm);
        self.ray_with_mouth(lane.arm, lane.direction, lane.index, mouth, ray_length)
    }

    fn ray_with_mouth(
        &self,
        arm_index: usize,
        direction: DirectionClass,
        index: usize,
        mouth: f64,
        ray_length: f64,
    ) -> LaneRay {
        let arm = &self.arms[arm_index];
        let u = arm.axis();
        let r = u.right_normal().as_vector();
        let offset = arm.lateral_offset(direction, index);
        let near = self.center + u.as_vector() * mouth + r * offset;
        let far = near + u.as_vector() * ray_length;
        let (points, travel) = match direction {
            DirectionClass::Entering => (vec![far, near], u.reversed()),
            DirectionClass::Leaving => (vec![near, far], u),
        };
        LaneRay {
            lane: LaneRef {
                arm: arm_index,
                direction,
                index,
            },
            line: Polyline::new(points).expect("ray endpoints are distinct"),
            travel,
            offset,
        }
    }

    /// Arm whose heading is angularly closest to `heading`.
    pub fn nearest_arm(&self, heading: f64) -> Option<usize> {
        (0..self.arms.len()).min_by(|&a, &b| {
            angular_distance(self.arms[a].heading, heading)
                .total_cmp(&angular_distance(self.arms[b].heading, heading))
        })
    }
}
