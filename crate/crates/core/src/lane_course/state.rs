use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{segment_distance, Point2};
use crate::ingest::Trajectory;
use crate::topology::ln_normal_pdf;

use super::model::{BorderRef, LaneletModel};
use super::proposal::{propose_course, Change, CourseMoveKind};
use super::score::smoothness_delta;
use super::LaneCourseConfig;

/// Closest segment of one path member for one trajectory point.
#[derive(Debug, Clone, Copy)]
struct Fit {
    dist: f64,
    seg: usize,
}

/// Per-trajectory fits against the three members of its lanelet path:
/// the in-lane center line, the connection center line closed by the
/// adjacent lane ends, and the out-lane center line. The union of their
/// segments is exactly the segment set of the concatenated path.
#[derive(Debug, Clone)]
struct TrackFits {
    members: [Vec<Fit>; 3],
    ll: f64,
}

#[derive(Debug)]
struct Track {
    points: Vec<Point2>,
    path: [usize; 3],
}

#[derive(Debug)]
struct Context {
    cfg: LaneCourseConfig,
    candidates: Vec<(BorderRef, BorderRef)>,
    tracks: Vec<Track>,
    /// lanelet -> (track, member) with `path[member] == lanelet`
    members: Vec<Vec<(usize, usize)>>,
    /// lanelet -> tracks entering the intersection from it
    ends_in: Vec<Vec<usize>>,
    /// lanelet -> tracks leaving the intersection through it
    starts_out: Vec<Vec<usize>>,
}

/// A lanelet model together with cached posterior terms, so a proposal
/// only rescores the trajectories and lanelets it touched.
#[derive(Debug, Clone)]
pub struct CourseState {
    model: LaneletModel,
    ctx: Arc<Context>,
    fits: Vec<Arc<TrackFits>>,
    smooth: Vec<f64>,
    shared: usize,
}

fn vertex_count(model: &LaneletModel, track: &Track, m: usize) -> usize {
    let n = model.lanelet(track.path[m]).center.points.len();
    if m == 1 {
        n + 2
    } else {
        n
    }
}

fn vertex(model: &LaneletModel, track: &Track, m: usize, v: usize) -> Point2 {
    if m != 1 {
        return model.lanelet(track.path[m]).center.points[v];
    }
    let conn = &model.lanelet(track.path[1]).center.points;
    if v == 0 {
        *model.lanelet(track.path[0]).center.points.last().expect("non-empty")
    } else if v == conn.len() + 1 {
        model.lanelet(track.path[2]).center.points[0]
    } else {
        conn[v - 1]
    }
}

fn seg_dist(model: &LaneletModel, track: &Track, m: usize, s: usize, p: Point2) -> f64 {
    segment_distance(p, vertex(model, track, m, s), vertex(model, track, m, s + 1))
}

fn full_fit(model: &LaneletModel, track: &Track, m: usize, p: Point2) -> Fit {
    let nv = vertex_count(model, track, m);
    let mut best = Fit {
        dist: f64::INFINITY,
        seg: 0,
    };
    for s in 0..nv - 1 {
        let d = seg_dist(model, track, m, s, p);
        if d < best.dist {
            best = Fit { dist: d, seg: s };
        }
    }
    best
}

fn track_ll(fits: &[Vec<Fit>; 3], sigma: f64) -> f64 {
    (0..fits[0].len())
        .map(|i| {
            let d = fits.iter().map(|f| f[i].dist).fold(f64::INFINITY, f64::min);
            ln_normal_pdf(d, sigma)
        })
        .sum()
}

impl CourseState {
    /// Caches every term of the posterior for `model`. Each assigned path
    /// must have the form `[lane in, connection, lane out]`; trajectories
    /// without an assignment are ignored.
    pub fn new(
        model: LaneletModel,
        trajectories: &[Trajectory],
        candidates: Vec<(BorderRef, BorderRef)>,
        cfg: &LaneCourseConfig,
    ) -> Result<Self> {
        model.check()?;
        let n = model.lanelets.len();
        let mut ctx = Context {
            cfg: cfg.clone(),
            candidates,
            tracks: Vec::new(),
            members: vec![Vec::new(); n],
            ends_in: vec![Vec::new(); n],
            starts_out: vec![Vec::new(); n],
        };
        for t in trajectories {
            let Some(path) = model.assignments.get(t.id()) else {
                continue;
            };
            let path: [usize; 3] = path.as_slice().try_into().map_err(|_| {
                Error::Lanelet(format!("trajectory {} path is not in/connection/out", t.id()))
            })?;
            let ti = ctx.tracks.len();
            for (m, &l) in path.iter().enumerate() {
                ctx.members[l].push((ti, m));
            }
            ctx.ends_in[path[0]].push(ti);
            ctx.starts_out[path[2]].push(ti);
            ctx.tracks.push(Track {
                points: t.positions().collect(),
                path,
            });
        }
        let fits = ctx
            .tracks
            .iter()
            .map(|track| {
                let members = [0, 1, 2].map(|m| {
                    track
                        .points
                        .iter()
                        .map(|&p| full_fit(&model, track, m, p))
                        .collect::<Vec<_>>()
                });
                let ll = track_ll(&members, cfg.sigma_perp);
                Arc::new(TrackFits { members, ll })
            })
            .collect();
        let smooth = model
            .lanelets
            .iter()
            .map(|l| ln_normal_pdf(smoothness_delta(&l.center), cfg.sigma_smooth))
            .collect();
        let shared = model.shared_pair_count();
        Ok(CourseState {
            model,
            ctx: Arc::new(ctx),
            fits,
            smooth,
            shared,
        })
    }

    pub fn model(&self) -> &LaneletModel {
        &self.model
    }

    pub fn into_model(self) -> LaneletModel {
        self.model
    }

    pub fn candidates(&self) -> &[(BorderRef, BorderRef)] {
        &self.ctx.candidates
    }

    /// Sum of the cached terms; equals `log_posterior_course` on the model.
    pub fn log_posterior(&self) -> f64 {
        self.ctx.cfg.tau * (1.0 + self.shared as f64).ln()
            + self.smooth.iter().sum::<f64>()
            + self.fits.iter().map(|f| f.ll).sum::<f64>()
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> CourseState {
        let (model, kind, changes) =
            propose_course(&self.model, &self.ctx.candidates, &self.ctx.cfg, rng);
        let mut next = self.clone();
        if changes.is_empty() {
            return next;
        }
        next.model = model;
        next.update(kind, &changes);
        next
    }

    fn update(&mut self, kind: CourseMoveKind, changes: &[Change]) {
        let ctx = Arc::clone(&self.ctx);
        if kind != CourseMoveKind::Move {
            self.shared = self.model.shared_pair_count();
        }
        // (track, member, changed vertex)
        let mut touched: Vec<(usize, usize, usize)> = Vec::new();
        for c in changes {
            let l = c.lanelet;
            for &(t, m) in &ctx.members[l] {
                touched.push((t, m, if m == 1 { c.center_index + 1 } else { c.center_index }));
            }
            let last = self.model.lanelet(l).center.points.len() - 1;
            if c.center_index == last {
                touched.extend(ctx.ends_in[l].iter().map(|&t| (t, 1, 0)));
            }
            if c.center_index == 0 {
                for &t in &ctx.starts_out[l] {
                    let nv = vertex_count(&self.model, &ctx.tracks[t], 1);
                    touched.push((t, 1, nv - 1));
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();

        let mut lanelets: Vec<usize> = changes.iter().map(|c| c.lanelet).collect();
        lanelets.dedup();
        for l in lanelets {
            let d = smoothness_delta(&self.model.lanelet(l).center);
            self.smooth[l] = ln_normal_pdf(d, ctx.cfg.sigma_smooth);
        }

        let mut i = 0;
        while i < touched.len() {
            let t = touched[i].0;
            let mut j = i;
            while j < touched.len() && touched[j].0 == t {
                j += 1;
            }
            self.refit(t, &touched[i..j]);
            i = j;
        }
    }

    fn refit(&mut self, t: usize, touched: &[(usize, usize, usize)]) {
        let track = &self.ctx.tracks[t];
        let fits = Arc::make_mut(&mut self.fits[t]);
        for m in 0..3 {
            let nv = vertex_count(&self.model, track, m);
            let mut segs: Vec<usize> = touched
                .iter()
                .filter(|x| x.1 == m)
                .flat_map(|&(_, _, v)| v.checked_sub(1).into_iter().chain([v]))
                .filter(|&s| s + 1 < nv)
                .collect();
            if segs.is_empty() {
                continue;
            }
            segs.sort_unstable();
            segs.dedup();
            for (fit, &p) in fits.members[m].iter_mut().zip(&track.points) {
                if segs.binary_search(&fit.seg).is_ok() {
                    *fit = full_fit(&self.model, track, m, p);
                    continue;
                }
                for &s in &segs {
                    let d = seg_dist(&self.model, track, m, s, p);
                    if d < fit.dist {
                        *fit = Fit { dist: d, seg: s };
                    }
                }
            }
        }
        fits.ll = track_ll(&fits.members, self.ctx.cfg.sigma_perp);
    }
}
