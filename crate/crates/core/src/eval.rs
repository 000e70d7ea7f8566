//! Trajectory error statistics against a reference polyline, mission
//! coverage checks and batch tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::field::FieldWorld;
use crate::geometry::{point_segment_distance, Vec2};
use crate::nav::Mode;
use crate::planner::OrderedWaypoints;
use crate::sim::{MissionResult, Outcome, TrajectorySample};

/// Bucket grid over polyline segments for nearest-segment queries.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    points: Vec<Vec2>,
    origin: Vec2,
    cell: f64,
    nx: i64,
    ny: i64,
    buckets: Vec<Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(points: &[Vec2]) -> Self {
        assert!(!points.is_empty(), "reference polyline is empty");
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let seg_len = crate::geometry::polyline_length(points) / (points.len().max(2) - 1) as f64;
        let extent = (hi - lo).max();
        let cell = if extent > 0.0 { seg_len.max(extent / 256.0) } else { 1.0 };
        let nx = ((hi.x - lo.x) / cell).floor() as i64 + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as i64 + 1;
        let mut buckets = vec![Vec::new(); (nx * ny) as usize];
        let cell_of = |p: Vec2| {
            (
                (((p.x - lo.x) / cell).floor() as i64).clamp(0, nx - 1),
                (((p.y - lo.y) / cell).floor() as i64).clamp(0, ny - 1),
            )
        };
        let n_seg = points.len().saturating_sub(1).max(1);
        for s in 0..n_seg {
            let (a, b) = (points[s], points[(s + 1).min(points.len() - 1)]);
            let (x0, y0) = cell_of(a.inf(&b));
            let (x1, y1) = cell_of(a.sup(&b));
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    buckets[(cy * nx + cx) as usize].push(s as u32);
                }
            }
        }
        Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn segment_distance(&self, p: Vec2, s: usize) -> f64 {
        let b = (s + 1).min(self.points.len() - 1);
        point_segment_distance(p, self.points[s], self.points[b])
    }

    /// Distance from `p` to the nearest point on the polyline.
    pub fn distance(&self, p: Vec2) -> f64 {
        let q = (p - self.origin) / self.cell;
        let (cx, cy) = (q.x.floor() as i64, q.y.floor() as i64);
        // how far the query sits outside the grid, in cells
        let outside = (-cx).max(cx - (self.nx - 1)).max(-cy).max(cy - (self.ny - 1)).max(0);
        let max_ring = outside + self.nx.max(self.ny);
        let mut best = f64::INFINITY;
        let mut ring = outside;
        loop {
            let mut visit = |x: i64, y: i64| {
                for &s in &self.buckets[(y * self.nx + x) as usize] {
                    best = best.min(self.segment_distance(p, s as usize));
                }
            };
            let (x0, x1) = ((cx - ring).max(0), (cx + ring).min(self.nx - 1));
            let (y0, y1) = ((cy - ring + 1).max(0), (cy + ring - 1).min(self.ny - 1));
            let rows = if ring == 0 { vec![cy] } else { vec![cy - ring, cy + ring] };
            for y in rows {
                if (0..self.ny).contains(&y) {
                    (x0..=x1).for_each(|x| visit(x, y));
                }
            }
            if ring > 0 {
                for x in [cx - ring, cx + ring] {
                    if (0..self.nx).contains(&x) {
                        (y0..=y1).for_each(|y| visit(x, y));
                    }
                }
            }
            // anything in a farther ring is at least `ring` cells away
            if best <= ring as f64 * self.cell || ring >= max_ring {
                return best;
            }
            ring += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub samples: usize,
    pub min_error: f64,
    pub max_error: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Population standard deviation of the errors.
    pub sigma: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mae = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mae) * (e - mae)).sum::<f64>() / n;
        let ms = errors.iter().map(|e| e * e).sum::<f64>() / n;
        Some(Self {
            samples: errors.len(),
            min_error: errors.iter().copied().fold(f64::INFINITY, f64::min),
            max_error: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mae,
            rmse: ms.sqrt(),
            sigma: var.sqrt(),
        })
    }
}

/// Per-sample distance to the reference polyline.
pub fn point_errors(trajectory: &[Vec2], reference: &[Vec2]) -> Vec<f64> {
    let index = SegmentIndex::new(reference);
    trajectory.iter().map(|p| index.distance(*p)).collect()
}

pub fn trajectory_errors(trajectory: &[Vec2], reference: &[Vec2]) -> Option<ErrorStats> {
    ErrorStats::from_errors(&point_errors(trajectory, reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Field corridors entered, in order.
    pub rows_visited: Vec<usize>,
    /// Field corridors in planner order.
    pub planned_rows: Vec<usize>,
    /// Visits match the plan and alternate direction as planned.
    pub abba_conformant: bool,
    pub min_clearance: f64,
    pub time_follow_row: f64,
    pub time_turn: f64,
    pub abort_tick: Option<u64>,
}

impl CoverageReport {
    pub fn n_rows_visited(&self) -> usize {
        self.rows_visited.len()
    }
}

/// Consecutive samples needed before a corridor counts as entered.
const MIN_VISIT_SAMPLES: usize = 15;

pub fn coverage_report(
    samples: &[TrajectorySample],
    outcome: &Outcome,
    world: &FieldWorld,
    ordered: &OrderedWaypoints,
    dt: f64,
) -> CoverageReport {
    let res = world.spec.resolution;
    // (corridor, first sample, last sample)
    let mut visits: Vec<(usize, usize, usize)> = Vec::new();
    let mut run: Option<(usize, usize, usize)> = None;
    let flush = |run: Option<(usize, usize, usize)>, visits: &mut Vec<(usize, usize, usize)>| {
        if let Some((c, a, b)) = run {
            if b - a + 1 >= MIN_VISIT_SAMPLES {
                match visits.last_mut() {
                    Some(last) if last.0 == c => last.2 = b,
                    _ => visits.push((c, a, b)),
                }
            }
        }
    };
    for (i, s) in samples.iter().enumerate() {
        let c = world.corridor_at(Vec2::new(s.x, s.y));
        match (c, run) {
            (Some(c), Some((rc, a, _))) if rc == c => run = Some((c, a, i)),
            (Some(c), _) => {
                flush(run, &mut visits);
                run = Some((c, i, i));
            }
            (None, _) => {
                flush(run, &mut visits);
                run = None;
            }
        }
    }
    flush(run, &mut visits);

    let planned: Vec<usize> = (0..ordered.row_count())
        .filter_map(|r| {
            let mid = (ordered.points[2 * r].position + ordered.points[2 * r + 1].position) * 0.5 * res;
            world.corridor_at(mid)
        })
        .collect();
    let along = |p: Vec2| world.field_coords(p).0;
    let planned_dirs: Vec<f64> = (0..ordered.row_count())
        .map(|r| {
            along(ordered.points[2 * r + 1].position * res) - along(ordered.points[2 * r].position * res)
        })
        .collect();
    let alternates = planned_dirs.windows(2).all(|w| w[0] * w[1] < 0.0);
    let visit_dirs_ok = visits.iter().enumerate().all(|(r, &(_, a, b))| {
        let d = along(Vec2::new(samples[b].x, samples[b].y)) - along(Vec2::new(samples[a].x, samples[a].y));
        planned_dirs.get(r).is_some_and(|p| d * p > 0.0)
    });
    let rows_visited: Vec<usize> = visits.iter().map(|v| v.0).collect();
    let complete = matches!(outcome, Outcome::Completed);
    let abba_conformant = alternates
        && visit_dirs_ok
        && if complete {
            rows_visited == planned
        } else {
            planned.starts_with(&rows_visited)
        };

    let time_in = |m: Mode| samples.iter().filter(|s| s.mode == m).count() as f64 * dt;
    CoverageReport {
        rows_visited,
        planned_rows: planned,
        abba_conformant,
        min_clearance: samples.iter().map(|s| s.clearance).fold(f64::INFINITY, f64::min),
        time_follow_row: time_in(Mode::FollowRow),
        time_turn: time_in(Mode::Turn),
        abort_tick: match outcome {
            Outcome::Completed => None,
            Outcome::Collision { tick, .. } | Outcome::Timeout { tick, .. } => Some(*tick),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_rows: usize,
    pub min_error: f64,
    pub max_error: f64,
    pub mae: f64,
    pub rmse: f64,
    pub sigma: f64,
    /// Same statistics over row-following samples only.
    pub intra_row: Option<ErrorStats>,
    pub collisions: usize,
    pub completion: bool,
    pub duration: f64,
    pub coverage: CoverageReport,
}

/// Scores a mission against the ideal coverage path (meters).
pub fn evaluate_run(
    result: &MissionResult,
    world: &FieldWorld,
    ordered: &OrderedWaypoints,
    reference: &[Vec2],
    dt: f64,
) -> Option<RunMetrics> {
    evaluate_samples(&result.samples, &result.outcome, world, ordered, reference, dt)
}

/// [`evaluate_run`] for a logged trajectory.
pub fn evaluate_samples(
    samples: &[TrajectorySample],
    outcome: &Outcome,
    world: &FieldWorld,
    ordered: &OrderedWaypoints,
    reference: &[Vec2],
    dt: f64,
) -> Option<RunMetrics> {
    let positions: Vec<Vec2> = samples.iter().map(|s| Vec2::new(s.x, s.y)).collect();
    let errors = point_errors(&positions, reference);
    let all = ErrorStats::from_errors(&errors)?;
    let intra: Vec<f64> = samples
        .iter()
        .zip(&errors)
        .filter(|(s, _)| s.mode == Mode::FollowRow)
        .map(|(_, e)| *e)
        .collect();
    let coverage = coverage_report(samples, outcome, world, ordered, dt);
    Some(RunMetrics {
        n_rows: coverage.n_rows_visited(),
        min_error: all.min_error,
        max_error: all.max_error,
        mae: all.mae,
        rmse: all.rmse,
        sigma: all.sigma,
        intra_row: ErrorStats::from_errors(&intra),
        collisions: usize::from(matches!(outcome, Outcome::Collision { .. })),
        completion: matches!(outcome, Outcome::Completed),
        duration: samples.last().map_or(0.0, |s| s.t),
        coverage,
    })
}

pub fn write_metrics_json(metrics: &RunMetrics, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), metrics)?;
    Ok(())
}

/// One row per run: seed, corridors visited, error columns (all path and
/// row-following only), collisions and completion.
pub fn write_batch_csv(runs: &[(u64, RunMetrics)], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "n_rows",
        "min_error",
        "max_error",
        "mae",
        "rmse",
        "sigma",
        "intra_mae",
        "intra_rmse",
        "intra_sigma",
        "collisions",
        "completion",
        "duration",
    ])?;
    for (seed, m) in runs {
        let intra = |f: fn(&ErrorStats) -> f64| m.intra_row.as_ref().map_or(String::new(), |s| format!("{:.6}", f(s)));
        w.write_record([
            seed.to_string(),
            m.n_rows.to_string(),
            format!("{:.6}", m.min_error),
            format!("{:.6}", m.max_error),
            format!("{:.6}", m.mae),
            format!("{:.6}", m.rmse),
            format!("{:.6}", m.sigma),
            intra(|s| s.mae),
            intra(|s| s.rmse),
            intra(|s| s.sigma),
            m.collisions.to_string(),
            m.completion.to_string(),
            format!("{:.3}", m.duration),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn brute(p: Vec2, reference: &[Vec2]) -> f64 {
        if reference.len() == 1 {
            return (p - reference[0]).norm();
        }
        reference
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_and_offset() {
        let reference: Vec<Vec2> = (0..50).map(|i| Vec2::new(i as f64 * 0.2, 0.0)).collect();
        let s = trajectory_errors(&reference, &reference).unwrap();
        assert_eq!((s.mae, s.rmse, s.sigma, s.max_error), (0.0, 0.0, 0.0, 0.0));
        let shifted: Vec<Vec2> = reference.iter().map(|p| p + Vec2::new(0.0, 0.1)).collect();
        let s = trajectory_errors(&shifted, &reference).unwrap();
        assert!((s.mae - 0.1).abs() < 1e-12 && (s.rmse - 0.1).abs() < 1e-12 && s.sigma < 1e-9);
    }

    #[test]
    fn far_queries_and_single_point_reference() {
        let reference = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)];
        let idx = SegmentIndex::new(&reference);
        for p in [Vec2::new(-50.0, 3.0), Vec2::new(40.0, -70.0), Vec2::new(0.5, 0.5)] {
            assert!((idx.distance(p) - brute(p, &reference)).abs() < 1e-12);
        }
        let single = vec![Vec2::new(2.0, 2.0)];
        assert!((SegmentIndex::new(&single).distance(Vec2::new(5.0, 6.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_polylines() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(2..200);
            let mut p = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let reference: Vec<Vec2> = (0..n)
                .map(|_| {
                    p += Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    p
                })
                .collect();
            let traj: Vec<Vec2> = (0..100)
                .map(|_| Vec2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0)))
                .collect();
            let fast = point_errors(&traj, &reference);
            for (q, e) in traj.iter().zip(&fast) {
                assert!((e - brute(*q, &reference)).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn metric_identities(errors in proptest::collection::vec(0.0..5.0f64, 1..200)) {
            let s = ErrorStats::from_errors(&errors).unwrap();
            prop_assert!(s.min_error <= s.mae + 1e-12 && s.mae <= s.max_error + 1e-12);
            prop_assert!(s.rmse + 1e-12 >= s.mae);
            prop_assert!((s.rmse * s.rmse - (s.mae * s.mae + s.sigma * s.sigma)).abs() < 1e-9);
        }

        #[test]
        fn refinement_is_stable(k in 2usize..6, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let reference: Vec<Vec2> = (0..20)
                .map(|i| Vec2::new(i as f64, rng.random_range(-2.0..2.0)))
                .collect();
            let fine = crate::geometry::densify(&reference, 1.0 / k as f64);
            let traj: Vec<Vec2> = (0..50)
                .map(|_| Vec2::new(rng.random_range(-2.0..22.0), rng.random_range(-4.0..4.0)))
                .collect();
            let a = trajectory_errors(&traj, &reference).unwrap();
            let b = trajectory_errors(&traj, &fine).unwrap();
            prop_assert!((a.mae - b.mae).abs() < 1e-9);
            prop_assert!((a.rmse - b.rmse).abs() < 1e-9);
            prop_assert!((a.max_error - b.max_error).abs() < 1e-9);
        }
    }
}
