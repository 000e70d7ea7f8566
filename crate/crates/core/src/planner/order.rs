use std::fmt;

use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan, median_nearest_neighbor};
use super::PlanError;
use crate::geometry::{normal, unit, Vec2};

/// Field side of a corridor waypoint. `A` is the side with the smaller
/// projection on the row direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldSide {
    A,
    B,
}

impl fmt::Display for FieldSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldSide::A => "A",
            FieldSide::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderedWaypoint {
    /// Pixels.
    pub position: Vec2,
    /// Traversal rank of the corridor.
    pub row: usize,
    pub side: FieldSide,
}

/// Waypoints in A-B-B-A traversal order: entries `2i` and `2i+1` are the
/// entry and exit of the `i`-th corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedWaypoints {
    pub points: Vec<OrderedWaypoint>,
    /// Row direction used for the ordering, radians in `[0, π)`.
    pub orientation: f64,
}

impl OrderedWaypoints {
    pub fn row_count(&self) -> usize {
        self.points.len() / 2
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.points.iter().map(|w| w.position).collect()
    }

    /// Median distance between adjacent corridors along the row normal.
    pub fn corridor_spacing(&self) -> Option<f64> {
        let nrm = normal(self.orientation);
        let mut gaps: Vec<f64> = (0..self.row_count().saturating_sub(1))
            .map(|r| {
                let a = self.points[2 * r].position + self.points[2 * r + 1].position;
                let b = self.points[2 * r + 2].position + self.points[2 * r + 3].position;
                ((b - a) * 0.5).dot(&nrm).abs()
            })
            .collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        Some(gaps[gaps.len() / 2])
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), crate::error::IoError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x_px", "y_px", "row", "side"])?;
        for p in &self.points {
            w.write_record([
                p.position.x.to_string(),
                p.position.y.to_string(),
                p.row.to_string(),
                p.side.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path, orientation: f64) -> Result<Self, crate::error::IoError> {
        use crate::error::IoError;
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| IoError::Format("short waypoint row".into()));
            let num = |i: usize| -> Result<f64, IoError> {
                field(i)?.parse().map_err(|_| IoError::Format("bad waypoint number".into()))
            };
            points.push(OrderedWaypoint {
                position: Vec2::new(num(0)?, num(1)?),
                row: field(2)?.parse().map_err(|_| IoError::Format("bad row index".into()))?,
                side: match field(3)? {
                    "A" => FieldSide::A,
                    "B" => FieldSide::B,
                    other => return Err(IoError::Format(format!("bad side {other:?}"))),
                },
            });
        }
        Ok(Self { points, orientation })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingConfig {
    /// DBSCAN radius as a multiple of the median nearest-neighbor distance.
    pub eps_factor: f64,
    pub min_pts: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        Self {
            eps_factor: 1.5,
            min_pts: 1,
        }
    }
}

fn centroid(points: &[Vec2], members: &[usize]) -> Vec2 {
    members.iter().map(|&i| points[i]).sum::<Vec2>() / members.len() as f64
}

/// Clusters the waypoints into the two field sides and emits them in
/// A-B-B-A order. The input order does not affect the result.
pub fn cluster_and_order(
    waypoints: &[Vec2],
    orientation: f64,
    cfg: &OrderingConfig,
) -> Result<OrderedWaypoints, PlanError> {
    if waypoints.len() < 4 {
        return Err(PlanError::TooFewWaypoints(waypoints.len()));
    }
    let dir = unit(orientation);
    let nrm = normal(orientation);

    let mut points = waypoints.to_vec();
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let eps = cfg.eps_factor * median_nearest_neighbor(&points).unwrap_or(0.0);
    let labels = dbscan(&points, eps, cfg.min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => clusters[*c].push(i),
            // noise points form their own clusters and get merged below
            None => clusters.push(vec![i]),
        }
    }

    while clusters.len() > 2 {
        let smallest = (0..clusters.len())
            .min_by_key(|&c| clusters[c].len())
            .expect("non-empty");
        let c0 = centroid(&points, &clusters[smallest]);
        let target = (0..clusters.len())
            .filter(|&c| c != smallest)
            .min_by(|&a, &b| {
                let da = (centroid(&points, &clusters[a]) - c0).norm();
                let db = (centroid(&points, &clusters[b]) - c0).norm();
                da.total_cmp(&db)
            })
            .expect("at least two clusters");
        let moved = clusters.remove(smallest);
        let target = if target > smallest { target - 1 } else { target };
        clusters[target].extend(moved);
    }
    if clusters.len() == 1 {
        // everything chained together: split at the widest gap along the rows
        let mut all = clusters.pop().expect("one cluster");
        all.sort_by(|&a, &b| points[a].dot(&dir).total_cmp(&points[b].dot(&dir)));
        let cut = (1..all.len())
            .max_by(|&i, &j| {
                let gi = (points[all[i]] - points[all[i - 1]]).dot(&dir);
                let gj = (points[all[j]] - points[all[j - 1]]).dot(&dir);
                gi.total_cmp(&gj)
            })
            .expect("at least four points");
        let tail = all.split_off(cut);
        clusters = vec![all, tail];
    }

    let mean_along = |c: &[usize]| c.iter().map(|&i| points[i].dot(&dir)).sum::<f64>() / c.len() as f64;
    let (mut side_a, mut side_b) = (clusters[0].clone(), clusters[1].clone());
    if mean_along(&side_a) > mean_along(&side_b) {
        std::mem::swap(&mut side_a, &mut side_b);
    }
    let by_normal = |v: &mut Vec<usize>| {
        v.sort_by(|&a, &b| {
            points[a]
                .dot(&nrm)
                .total_cmp(&points[b].dot(&nrm))
                .then(points[a].dot(&dir).total_cmp(&points[b].dot(&dir)))
        })
    };
    by_normal(&mut side_a);
    by_normal(&mut side_b);

    if side_a.len() != side_b.len() {
        let (longer, shorter) = if side_a.len() > side_b.len() {
            (&side_a, &side_b)
        } else {
            (&side_b, &side_a)
        };
        return Err(PlanError::SideImbalance {
            a: side_a.len(),
            b: side_b.len(),
            unmatched: longer[shorter.len()..].iter().map(|&i| points[i]).collect(),
        });
    }

    let mut ordered = Vec::with_capacity(points.len());
    for (row, (&a, &b)) in side_a.iter().zip(&side_b).enumerate() {
        let wa = OrderedWaypoint {
            position: points[a],
            row,
            side: FieldSide::A,
        };
        let wb = OrderedWaypoint {
            position: points[b],
            row,
            side: FieldSide::B,
        };
        if row % 2 == 0 {
            ordered.extend([wa, wb]);
        } else {
            ordered.extend([wb, wa]);
        }
    }
    Ok(OrderedWaypoints {
        points: ordered,
        orientation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn grid_points(rows: usize) -> Vec<Vec2> {
        let mut pts = Vec::new();
        for r in 0..rows {
            let y = 100.0 + 28.0 * r as f64;
            pts.push(Vec2::new(60.0, y));
            pts.push(Vec2::new(400.0 + (r % 3) as f64 * 5.0, y));
        }
        pts
    }

    #[test]
    fn ten_rows_abba() {
        let pts = grid_points(10);
        let ord = cluster_and_order(&pts, 0.0, &OrderingConfig::default()).unwrap();
        assert_eq!(ord.points.len(), 20);
        for r in 0..10 {
            let (p, q) = (ord.points[2 * r], ord.points[2 * r + 1]);
            assert_eq!((p.row, q.row), (r, r));
            let expected = if r % 2 == 0 {
                (FieldSide::A, FieldSide::B)
            } else {
                (FieldSide::B, FieldSide::A)
            };
            assert_eq!((p.side, q.side), expected);
            assert!((p.position.y - (100.0 + 28.0 * r as f64)).abs() < 1e-12);
        }
        assert!((ord.corridor_spacing().unwrap() - 28.0).abs() < 1e-12);
    }

    #[test]
    fn input_order_does_not_matter() {
        let pts = grid_points(7);
        let reference = cluster_and_order(&pts, 0.0, &OrderingConfig::default()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(cluster_and_order(&shuffled, 0.0, &OrderingConfig::default()).unwrap(), reference);
        }
    }

    #[test]
    fn fragmented_side_is_merged() {
        // a wide hole splits side B into two DBSCAN clusters
        let mut pts = grid_points(6);
        for p in pts.iter_mut().filter(|p| p.x > 300.0 && p.y > 150.0) {
            p.y += 60.0;
        }
        let ord = cluster_and_order(&pts, 0.0, &OrderingConfig::default()).unwrap();
        assert_eq!(ord.points.len(), 12);
        assert!(ord.points.iter().filter(|w| w.side == FieldSide::A).all(|w| w.position.x < 100.0));
    }

    #[test]
    fn imbalance_is_reported() {
        let mut pts = grid_points(5);
        pts.push(Vec2::new(400.0, 100.0 + 28.0 * 5.0));
        match cluster_and_order(&pts, 0.0, &OrderingConfig::default()) {
            Err(PlanError::SideImbalance { a, b, unmatched }) => {
                assert_eq!((a, b), (5, 6));
                assert_eq!(unmatched, vec![Vec2::new(400.0, 240.0)]);
            }
            other => panic!("expected imbalance, got {other:?}"),
        }
        assert_eq!(
            cluster_and_order(&pts[..3], 0.0, &OrderingConfig::default()),
            Err(PlanError::TooFewWaypoints(3))
        );
    }
}
