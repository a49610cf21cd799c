//! Scores estimates against ground truth and summarizes suites.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{angular_distance, points_distance, Point2};
use crate::ingest::DirectionClass;
use crate::lane_course::{LaneletKind, LaneletModel};
use crate::synthetic::GroundTruth;
use crate::topology::{LaneRef, TopologyModel};

/// Pairs `(estimated arm, true arm)`, greedily by smallest heading
/// difference. Ties go to the lower index pair. Surplus arms on either
/// side stay unmatched.
pub fn match_arms(est: &TopologyModel, gt: &TopologyModel) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in est.arms.iter().enumerate() {
        for (j, b) in gt.arms.iter().enumerate() {
            pairs.push((angular_distance(a.heading, b.heading), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let (mut used_e, mut used_g) = (BTreeSet::new(), BTreeSet::new());
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_e.contains(&i) && !used_g.contains(&j) {
            used_e.insert(i);
            used_g.insert(j);
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub arm_count_correct: bool,
    pub lane_level_correct: bool,
    /// Meters between the estimated and true centers.
    pub center_error: f64,
    /// Mean absolute heading error over matched arms, radians.
    pub mean_angle_error: f64,
    /// Absolute heading error of every matched arm, radians.
    pub angle_errors: Vec<f64>,
    pub matching: Vec<(usize, usize)>,
}

fn lane_counts_agree(est: &TopologyModel, gt: &TopologyModel, i: usize, j: usize) -> bool {
    [DirectionClass::Entering, DirectionClass::Leaving]
        .iter()
        .all(|&d| est.arms[i].lanes(d).len() == gt.arms[j].lanes(d).len())
}

pub fn topology_report(est: &TopologyModel, gt: &TopologyModel) -> TopologyReport {
    let matching = match_arms(est, gt);
    let arm_count_correct = est.arms.len() == gt.arms.len();
    let lane_level_correct =
        arm_count_correct && matching.iter().all(|&(i, j)| lane_counts_agree(est, gt, i, j));
    let angle_errors: Vec<f64> = matching
        .iter()
        .map(|&(i, j)| angular_distance(est.arms[i].heading, gt.arms[j].heading))
        .collect();
    let mean_angle_error = if angle_errors.is_empty() {
        0.0
    } else {
        angle_errors.iter().sum::<f64>() / angle_errors.len() as f64
    };
    TopologyReport {
        arm_count_correct,
        lane_level_correct,
        center_error: est.center.distance(gt.center),
        mean_angle_error,
        angle_errors,
        matching,
    }
}

/// Mean over the estimated points of their distance to the true line.
/// Not symmetric: only `est` is sampled.
pub fn center_line_deviation(est: &[Point2], gt: &[Point2]) -> f64 {
    if est.is_empty() {
        return 0.0;
    }
    est.iter().map(|&p| points_distance(p, gt)).sum::<f64>() / est.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneDeviation {
    /// The lanelet as named by the ground truth.
    pub kind: LaneletKind,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneCourseReport {
    pub per_lane_deviation: Vec<LaneDeviation>,
    pub mean_deviation: f64,
    /// Estimated lanelets that had no correct counterpart.
    pub unmatched: usize,
    /// Share of considered lanelets that were evaluated.
    pub coverage: f64,
}

/// Maps an estimated lane to its true counterpart: same direction and index
/// on the matched arm, provided that arm's count in that direction agrees.
fn true_lane(
    lane: LaneRef,
    est: &TopologyModel,
    gt: &TopologyModel,
    matching: &[(usize, usize)],
) -> Option<LaneRef> {
    let &(_, j) = matching.iter().find(|(i, _)| *i == lane.arm)?;
    let n_est = est.arms[lane.arm].lanes(lane.direction).len();
    (n_est == gt.arms[j].lanes(lane.direction).len()).then_some(LaneRef { arm: j, ..lane })
}

/// Deviation of every correctly estimated lanelet from its true center
/// line: lanes via [`true_lane`], connections when both of their lanes map.
/// With `with_data_only`, only lanelets on some assigned path count.
pub fn lane_course_report(
    est: &LaneletModel,
    est_topology: &TopologyModel,
    gt: &GroundTruth,
    with_data_only: bool,
) -> LaneCourseReport {
    let matching = match_arms(est_topology, &gt.topology);
    let used: BTreeSet<usize> = est.assignments.values().flatten().copied().collect();
    let map = |l: LaneRef| true_lane(l, est_topology, &gt.topology, &matching);
    let mut per_lane = Vec::new();
    let mut unmatched = 0;
    for (li, l) in est.lanelets.iter().enumerate() {
        if with_data_only && !used.contains(&li) {
            continue;
        }
        let target = match l.kind {
            LaneletKind::Lane(r) => map(r).and_then(|t| {
                gt.lanelets
                    .lane_lanelet(t)
                    .map(|k| (LaneletKind::Lane(t), gt.lanelets.lanelet(k).center.points.clone()))
            }),
            LaneletKind::Connection { from, to } => map(from)
                .zip(map(to))
                .and_then(|(f, t)| gt.connection(f, t))
                .map(|c| (LaneletKind::Connection { from: c.from, to: c.to }, c.center.clone())),
        };
        match target {
            Some((kind, line)) => per_lane.push(LaneDeviation {
                kind,
                deviation: center_line_deviation(&l.center.points, &line),
            }),
            None => unmatched += 1,
        }
    }
    let mean_deviation = mean(per_lane.iter().map(|d| d.deviation));
    let considered = per_lane.len() + unmatched;
    LaneCourseReport {
        coverage: if considered == 0 { 1.0 } else { per_lane.len() as f64 / considered as f64 },
        per_lane_deviation: per_lane,
        mean_deviation,
        unmatched,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// `q`-quantile by linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Everything measured on one intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub topology: TopologyReport,
    pub lane_course: Option<LaneCourseReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub count: usize,
    /// Percent of intersections with the right number of arms.
    pub arm_count_accuracy: f64,
    /// Percent with the right arms and lanes per direction on every arm.
    pub lane_level_accuracy: f64,
    pub mean_center_error: f64,
    pub center_error_variance: f64,
    pub median_center_error: f64,
    pub p90_center_error: f64,
    /// Mean over all matched arms of the suite, radians.
    pub mean_angle_error: f64,
    /// Mean over all evaluated lanelets of the suite, meters.
    pub mean_lane_deviation: Option<f64>,
    pub evaluated_lanelets: usize,
}

pub fn aggregate(reports: &[IntersectionReport]) -> SuiteSummary {
    let n = reports.len();
    let pct = |f: &dyn Fn(&IntersectionReport) -> bool| {
        if n == 0 {
            0.0
        } else {
            100.0 * reports.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    let centers: Vec<f64> = reports.iter().map(|r| r.topology.center_error).collect();
    let mean_center_error = mean(centers.iter().copied());
    let center_error_variance = mean(centers.iter().map(|c| (c - mean_center_error).powi(2)));
    let deviations: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.lane_course.as_ref())
        .flat_map(|l| l.per_lane_deviation.iter().map(|d| d.deviation))
        .collect();
    SuiteSummary {
        count: n,
        arm_count_accuracy: pct(&|r| r.topology.arm_count_correct),
        lane_level_accuracy: pct(&|r| r.topology.lane_level_correct),
        mean_center_error,
        center_error_variance,
        median_center_error: percentile(&centers, 0.5),
        p90_center_error: percentile(&centers, 0.9),
        mean_angle_error: mean(reports.iter().flat_map(|r| r.topology.angle_errors.iter().copied())),
        mean_lane_deviation: (!deviations.is_empty()).then(|| mean(deviations.iter().copied())),
        evaluated_lanelets: deviations.len(),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;
    use crate::geometry::Rigid2;
    use crate::synthetic::{build_ground_truth, GenerationParams};
    use crate::topology::Arm;

    fn topo(headings: &[f64], lanes: &[(usize, usize)]) -> TopologyModel {
        TopologyModel {
            center: Point2::new(1.0, 2.0),
            arms: headings
                .iter()
                .zip(lanes)
                .map(|(&h, &(i, o))| Arm::new(h, 1.0, i, o, 3.5))
                .collect(),
        }
    }

    fn cross() -> TopologyModel {
        topo(&[0.0, PI / 2.0, PI, 1.5 * PI], &[(1, 1), (2, 1), (1, 2), (1, 1)])
    }

    #[test]
    fn identical_models_match_identically_and_score_perfectly() {
        let t = cross();
        assert_eq!(match_arms(&t, &t), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        let r = topology_report(&t, &t);
        assert!(r.arm_count_correct && r.lane_level_correct);
        assert_eq!(r.center_error, 0.0);
        assert_eq!(r.mean_angle_error, 0.0);
    }

    #[test]
    fn small_rotation_keeps_the_matching() {
        let gt = cross();
        let mut est = gt.clone();
        for a in &mut est.arms {
            a.heading = (a.heading + 5f64.to_radians()).rem_euclid(2.0 * PI);
        }
        assert_eq!(match_arms(&est, &gt), match_arms(&gt, &gt));
        let r = topology_report(&est, &gt);
        assert!((r.mean_angle_error - 5f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn three_against_four_arms_leaves_one_truth_arm_unmatched() {
        let gt = cross();
        let est = topo(&[0.1, PI / 2.0, PI + 0.05], &[(1, 1), (2, 1), (1, 2)]);
        let m = match_arms(&est, &gt);
        assert_eq!(m.len(), 3);
        // exhaustive check: the greedy matching is the minimum-cost one here
        let all: Vec<usize> = (0..4).collect();
        let mut best = f64::INFINITY;
        for skip in &all {
            let rest: Vec<usize> = all.iter().copied().filter(|j| j != skip).collect();
            let cost: f64 = (0..3)
                .map(|i| angular_distance(est.arms[i].heading, gt.arms[rest[i]].heading))
                .sum();
            best = best.min(cost);
        }
        let got: f64 = m
            .iter()
            .map(|&(i, j)| angular_distance(est.arms[i].heading, gt.arms[j].heading))
            .sum();
        assert!((got - best).abs() < 1e-12);
        let unmatched: Vec<usize> = (0..4).filter(|j| !m.iter().any(|(_, k)| k == j)).collect();
        assert_eq!(unmatched, vec![3]);
        let r = topology_report(&est, &gt);
        assert!(!r.arm_count_correct && !r.lane_level_correct);
    }

    #[test]
    fn one_extra_lane_breaks_only_lane_level_correctness() {
        let gt = cross();
        let mut est = gt.clone();
        est.arms[2] = Arm::new(PI, 1.0, 2, 2, 3.5);
        let r = topology_report(&est, &gt);
        assert!(r.arm_count_correct);
        assert!(!r.lane_level_correct);
    }

    #[test]
    fn shifted_center_is_reported_in_meters() {
        let gt = cross();
        let mut est = gt.clone();
        est.center += Point2::new(1.2, -1.6);
        assert!((topology_report(&est, &gt).center_error - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_of_simple_lines() {
        let gt: Vec<Point2> = (0..11).map(|k| Point2::new(k as f64, 0.0)).collect();
        assert_eq!(center_line_deviation(&gt, &gt), 0.0);
        let off: Vec<Point2> = gt.iter().map(|p| *p + Point2::new(0.0, 0.2)).collect();
        assert!((center_line_deviation(&off, &gt) - 0.2).abs() < 1e-12);
    }

    /// Distance by dense sampling of the true line.
    fn sampled_deviation(est: &[Point2], gt: &[Point2], per_segment: usize) -> f64 {
        let dense: Vec<Point2> = gt
            .windows(2)
            .flat_map(|w| (0..per_segment).map(move |k| w[0].lerp(w[1], k as f64 / per_segment as f64)))
            .chain(std::iter::once(*gt.last().unwrap()))
            .collect();
        est.iter()
            .map(|p| dense.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / est.len() as f64
    }

    proptest! {
        #[test]
        fn deviation_matches_dense_sampling(
            gt in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64), 2..6),
            est in prop::collection::vec((-25.0..25.0f64, -25.0..25.0f64), 1..8),
        ) {
            let gt: Vec<Point2> = gt.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
            let est: Vec<Point2> = est.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
            let per_segment = 10_000 / (gt.len() - 1);
            let oracle = sampled_deviation(&est, &gt, per_segment);
            prop_assert!((center_line_deviation(&est, &gt) - oracle).abs() < 1e-3);
        }

        #[test]
        fn metrics_ignore_a_common_rigid_motion(
            rot in -PI..PI, tx in -50.0..50.0f64, ty in -50.0..50.0f64,
            shift in 0.0..4.0f64, turn in -0.3..0.3f64,
        ) {
            let gt = cross();
            let mut est = gt.clone();
            est.center += Point2::new(shift, -shift / 2.0);
            est.arms[1].heading += turn;
            let t = Rigid2::new(rot, Point2::new(tx, ty));
            let move_topo = |m: &TopologyModel| {
                let mut m = m.clone();
                m.center = t.apply(m.center);
                for a in &mut m.arms {
                    a.heading = (a.heading + rot).rem_euclid(2.0 * PI);
                }
                m
            };
            let a = topology_report(&est, &gt);
            let b = topology_report(&move_topo(&est), &move_topo(&gt));
            prop_assert_eq!(a.arm_count_correct, b.arm_count_correct);
            prop_assert_eq!(a.lane_level_correct, b.lane_level_correct);
            prop_assert!((a.center_error - b.center_error).abs() < 1e-9);
            prop_assert!((a.mean_angle_error - b.mean_angle_error).abs() < 1e-9);
            let line: Vec<Point2> = (0..5).map(|k| Point2::new(k as f64 * 3.0, (k * k) as f64)).collect();
            let est_line: Vec<Point2> = line.iter().map(|p| *p + Point2::new(0.3, -0.7)).collect();
            let d0 = center_line_deviation(&est_line, &line);
            let d1 = center_line_deviation(
                &est_line.iter().map(|&p| t.apply(p)).collect::<Vec<_>>(),
                &line.iter().map(|&p| t.apply(p)).collect::<Vec<_>>(),
            );
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn self_report_is_perfect(
            headings in prop::collection::vec(0.0..2.0 * PI, 2..6),
            lanes in prop::collection::vec((1usize..4, 1usize..4), 6),
        ) {
            let t = topo(&headings, &lanes[..headings.len()]);
            let r = topology_report(&t, &t);
            prop_assert!(r.arm_count_correct && r.lane_level_correct);
            prop_assert_eq!(r.center_error, 0.0);
            prop_assert_eq!(r.mean_angle_error, 0.0);
        }
    }

    #[test]
    fn true_lanelets_deviate_by_zero_from_themselves() {
        let gt = build_ground_truth(cross(), &GenerationParams::default()).unwrap();
        let r = lane_course_report(&gt.lanelets, &gt.topology, &gt, false);
        assert_eq!(r.unmatched, 0);
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.per_lane_deviation.len(), gt.lanelets.lanelets.len());
        // odd center points of curved connections are chord midpoints
        for d in &r.per_lane_deviation {
            match d.kind {
                LaneletKind::Lane(_) => assert!(d.deviation < 1e-9),
                LaneletKind::Connection { .. } => assert!(d.deviation < 0.05, "{d:?}"),
            }
        }
    }

    fn report(arm: bool, lane: bool, center: f64, angles: &[f64], devs: &[f64]) -> IntersectionReport {
        IntersectionReport {
            topology: TopologyReport {
                arm_count_correct: arm,
                lane_level_correct: lane,
                center_error: center,
                mean_angle_error: angles.iter().sum::<f64>() / angles.len().max(1) as f64,
                angle_errors: angles.to_vec(),
                matching: Vec::new(),
            },
            lane_course: Some(LaneCourseReport {
                per_lane_deviation: devs
                    .iter()
                    .map(|&deviation| LaneDeviation {
                        kind: LaneletKind::Lane(LaneRef {
                            arm: 0,
                            direction: DirectionClass::Entering,
                            index: 0,
                        }),
                        deviation,
                    })
                    .collect(),
                mean_deviation: devs.iter().sum::<f64>() / devs.len().max(1) as f64,
                unmatched: 0,
                coverage: 1.0,
            }),
        }
    }

    #[test]
    fn accuracy_is_a_percentage_of_intersections() {
        let mut reports = vec![report(true, true, 0.1, &[0.0], &[0.1]); 999];
        reports.push(report(false, false, 0.1, &[0.0], &[0.1]));
        let s = aggregate(&reports);
        assert!((s.arm_count_accuracy - 99.9).abs() < 1e-9);
    }

    #[test]
    fn identical_reports_have_zero_variance() {
        let reports = vec![report(true, false, 0.7, &[0.01, 0.03], &[0.2, 0.4]); 10];
        let s = aggregate(&reports);
        assert!((s.mean_center_error - 0.7).abs() < 1e-12);
        assert!(s.center_error_variance.abs() < 1e-24);
        assert!((s.median_center_error - 0.7).abs() < 1e-12);
        assert_eq!(s.lane_level_accuracy, 0.0);
        assert!((s.mean_angle_error - 0.02).abs() < 1e-12);
        assert!((s.mean_lane_deviation.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn summary_matches_flat_recomputation() {
        let mut rng = crate::mcmc::chain_rng(4);
        use rand::Rng;
        let reports: Vec<IntersectionReport> = (0..57)
            .map(|_| {
                let na = rng.random_range(1..6);
                let nd = rng.random_range(0..9);
                let angles: Vec<f64> = (0..na).map(|_| rng.random_range(0.0..0.1)).collect();
                let devs: Vec<f64> = (0..nd).map(|_| rng.random_range(0.0..1.0)).collect();
                report(rng.random(), rng.random(), rng.random_range(0.0..3.0), &angles, &devs)
            })
            .collect();
        let s = aggregate(&reports);
        let mut arm = 0;
        let mut lane = 0;
        let (mut csum, mut asum, mut acount, mut dsum, mut dcount) = (0.0, 0.0, 0, 0.0, 0);
        for r in &reports {
            arm += r.topology.arm_count_correct as usize;
            lane += r.topology.lane_level_correct as usize;
            csum += r.topology.center_error;
            for a in &r.topology.angle_errors {
                asum += a;
                acount += 1;
            }
            for d in &r.lane_course.as_ref().unwrap().per_lane_deviation {
                dsum += d.deviation;
                dcount += 1;
            }
        }
        assert!((s.arm_count_accuracy - 100.0 * arm as f64 / 57.0).abs() < 1e-9);
        assert!((s.lane_level_accuracy - 100.0 * lane as f64 / 57.0).abs() < 1e-9);
        assert!((s.mean_center_error - csum / 57.0).abs() < 1e-12);
        assert!((s.mean_angle_error - asum / acount as f64).abs() < 1e-12);
        assert!((s.mean_lane_deviation.unwrap() - dsum / dcount as f64).abs() < 1e-12);
        assert_eq!(s.evaluated_lanelets, dcount);
        let mut sorted: Vec<f64> = reports.iter().map(|r| r.topology.center_error).collect();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(s.median_center_error, sorted[28]);
    }
}
