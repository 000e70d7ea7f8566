use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::intra::{plan_intra_row, IntraRowConfig};
use super::order::{FieldSide, OrderedWaypoints};
use super::turn::plan_turn;
use super::{PlanError, PlannerConfig};
use crate::error::IoError;
use crate::field::{GeoPoint, OccupancyGrid};
use crate::geometry::Vec2;

/// Which part of the mission a path point belongs to. `Turn(i)` joins
/// corridor `i` to corridor `i + 1` (traversal ranks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentTag {
    IntraRow(usize),
    Turn(usize),
}

impl fmt::Display for SegmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentTag::IntraRow(i) => write!(f, "intra_row:{i}"),
            SegmentTag::Turn(i) => write!(f, "turn:{}-{}", i, i + 1),
        }
    }
}

impl FromStr for SegmentTag {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IoError::Format(format!("bad segment tag {s:?}"));
        if let Some(i) = s.strip_prefix("intra_row:") {
            return i.parse().map(SegmentTag::IntraRow).map_err(|_| bad());
        }
        let rest = s.strip_prefix("turn:").ok_or_else(bad)?;
        let (a, b) = rest.split_once('-').ok_or_else(bad)?;
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.parse().map_err(|_| bad())?;
        if b != a + 1 {
            return Err(bad());
        }
        Ok(SegmentTag::Turn(a))
    }
}

/// Dense global path in meters with one tag per point.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPath {
    pub points: Vec<Vec2>,
    pub geo: Option<Vec<GeoPoint>>,
    pub tags: Vec<SegmentTag>,
    /// Nominal spacing, meters.
    pub step: f64,
}

impl GlobalPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maximal runs of equal tags, in path order.
    pub fn runs(&self) -> Vec<(SegmentTag, Range<usize>)> {
        let mut out: Vec<(SegmentTag, Range<usize>)> = Vec::new();
        for (i, tag) in self.tags.iter().enumerate() {
            match out.last_mut() {
                Some((t, r)) if t == tag => r.end = i + 1,
                _ => out.push((*tag, i..i + 1)),
            }
        }
        out
    }

    pub fn length(&self) -> f64 {
        crate::geometry::polyline_length(&self.points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IoError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x_m", "y_m", "lat", "lon", "tag"])?;
        for (i, (p, tag)) in self.points.iter().zip(&self.tags).enumerate() {
            let (lat, lon) = match &self.geo {
                Some(g) => (format!("{:.9}", g[i].lat), format!("{:.9}", g[i].lon)),
                None => (String::new(), String::new()),
            };
            w.write_record([p.x.to_string(), p.y.to_string(), lat, lon, tag.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, step: f64) -> Result<Self, IoError> {
        let mut r = csv::Reader::from_path(path)?;
        let (mut points, mut geo, mut tags) = (Vec::new(), Vec::new(), Vec::new());
        let mut has_geo = true;
        for rec in r.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).ok_or_else(|| IoError::Format("short path row".into()));
            let num = |s: &str| s.parse::<f64>().map_err(|_| IoError::Format(format!("bad number {s:?}")));
            points.push(Vec2::new(num(get(0)?)?, num(get(1)?)?));
            let (lat, lon) = (get(2)?, get(3)?);
            if lat.is_empty() || lon.is_empty() {
                has_geo = false;
            } else {
                geo.push(GeoPoint {
                    lat: num(lat)?,
                    lon: num(lon)?,
                });
            }
            tags.push(get(4)?.parse()?);
        }
        Ok(Self {
            points,
            geo: has_geo.then_some(geo),
            tags,
            step,
        })
    }
}

/// Joins corridor traversals and headland turns into one path. Inputs
/// are in pixels, the output is in meters and geo-tagged from the grid.
pub fn build_global_path(
    ordered: &OrderedWaypoints,
    grid: &OccupancyGrid,
    cfg: &PlannerConfig,
) -> Result<GlobalPath, PlanError> {
    let rows = ordered.row_count();
    if rows == 0 || !ordered.points.len().is_multiple_of(2) {
        return Err(PlanError::TooFewWaypoints(ordered.points.len()));
    }
    let res = grid.resolution();
    let step_px = cfg.step / res;
    let intra_cfg = IntraRowConfig {
        step: step_px,
        search_radius: cfg
            .search_radius
            .or_else(|| ordered.corridor_spacing())
            .unwrap_or(IntraRowConfig::default().search_radius),
        robot_diameter: cfg.robot_diameter / res,
        smoothing: cfg.smoothing,
        ..IntraRowConfig::default()
    };

    let mut points: Vec<Vec2> = Vec::new();
    let mut tags = Vec::new();
    for r in 0..rows {
        let from = ordered.points[2 * r].position;
        let to = ordered.points[2 * r + 1];
        let intra = plan_intra_row(from, to.position, grid, &intra_cfg, r)?;
        tags.extend(std::iter::repeat_n(SegmentTag::IntraRow(r), intra.len()));
        points.extend(intra);
        if r + 1 < rows {
            let next = ordered.points[2 * r + 2].position;
            let outward = match to.side {
                FieldSide::B => ordered.orientation,
                FieldSide::A => ordered.orientation + std::f64::consts::PI,
            };
            let turn = plan_turn(to.position, next, outward, cfg.end_row_distance, step_px)?;
            let inner = &turn.points[1..turn.points.len() - 1];
            tags.extend(std::iter::repeat_n(SegmentTag::Turn(r), inner.len()));
            points.extend_from_slice(inner);
        }
    }
    for (p, tag) in points.iter().zip(&tags) {
        let clearance = grid.clearance(*p, cfg.safety_margin);
        if clearance < cfg.safety_margin {
            return Err(PlanError::UnsafePath {
                tag: *tag,
                at: *p,
                clearance,
            });
        }
    }
    let points: Vec<Vec2> = points.into_iter().map(|p| p * res).collect();
    let geo = points.iter().map(|p| grid.meters_to_geo(*p)).collect();
    Ok(GlobalPath {
        points,
        geo: Some(geo),
        tags,
        step: cfg.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_field, FieldSpec};
    use crate::planner::{cluster_and_order, OrderingConfig};

    #[test]
    fn tag_round_trip() {
        for tag in [SegmentTag::IntraRow(0), SegmentTag::IntraRow(12), SegmentTag::Turn(3)] {
            assert_eq!(tag.to_string().parse::<SegmentTag>().unwrap(), tag);
        }
        assert_eq!(SegmentTag::Turn(3).to_string(), "turn:3-4");
        assert!("turn:3-5".parse::<SegmentTag>().is_err());
        assert!("row:1".parse::<SegmentTag>().is_err());
    }

    fn planned() -> (crate::field::FieldWorld, GlobalPath) {
        let world = generate_field(&FieldSpec::default()).unwrap();
        let wps: Vec<Vec2> = world.ground_truth_waypoints().iter().map(|w| w.position).collect();
        let ordered = cluster_and_order(&wps, 0.0, &OrderingConfig::default()).unwrap();
        let path = build_global_path(&ordered, &world.occupancy, &PlannerConfig::default()).unwrap();
        (world, path)
    }

    #[test]
    fn path_structure() {
        let (world, path) = planned();
        let runs = path.runs();
        let n = world.corridor_count();
        assert_eq!(runs.len(), 2 * n - 1);
        for (i, (tag, _)) in runs.iter().enumerate() {
            let expected = if i % 2 == 0 {
                SegmentTag::IntraRow(i / 2)
            } else {
                SegmentTag::Turn(i / 2)
            };
            assert_eq!(*tag, expected);
        }
        for w in path.points.windows(2) {
            assert!((w[1] - w[0]).norm() <= path.step + 1e-9);
        }
        for p in &path.points {
            assert!(!world.occupancy.is_occupied_at(*p / world.spec.resolution));
        }
    }

    #[test]
    fn csv_round_trip() {
        let (_, path) = planned();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("global_path.csv");
        path.write_csv(&file).unwrap();
        let back = GlobalPath::read_csv(&file, path.step).unwrap();
        assert_eq!(back.tags, path.tags);
        assert_eq!(back.points, path.points);
        let geo = back.geo.unwrap();
        assert!((geo[5].lat - path.geo.as_ref().unwrap()[5].lat).abs() < 1e-8);
    }
}
