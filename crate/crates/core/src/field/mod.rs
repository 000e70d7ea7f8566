//! Parametric row-crop fields: geometry, rasterized occupancy grid and the
//! ground-truth waypoints and coverage path derived from them.

mod grid;
mod sampler;

pub use grid::{GeoPoint, OccupancyGrid, FREE, OCCUPIED};
pub use sampler::FieldRanges;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normal, unit, Vec2};
use crate::planner::{plan_turn, GlobalPath, SegmentTag};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("rows do not fit in a {width}x{height} grid; need at least {required_width}x{required_height} px")]
    DoesNotFit {
        width: usize,
        height: usize,
        required_width: usize,
        required_height: usize,
    },
}

/// Parameters of a synthetic field. Lengths in meters, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub n_rows: usize,
    /// Row direction, in `[0, π)`, measured in pixel axes (x right, y down).
    pub row_orientation: f64,
    pub row_length: f64,
    pub inter_row_spacing: f64,
    pub plant_radius_range: (f64, f64),
    pub plant_spacing: f64,
    pub hole_probability: f64,
    /// Signed curvature of the middle row; `0` gives straight rows.
    pub curvature: f64,
    /// Meters per pixel.
    pub resolution: f64,
    pub grid_height: usize,
    pub grid_width: usize,
    pub geo_origin: GeoPoint,
    pub rng_seed: u64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            n_rows: 5,
            row_orientation: 0.0,
            row_length: 20.0,
            inter_row_spacing: 2.8,
            plant_radius_range: (0.3, 0.4),
            plant_spacing: 0.8,
            hole_probability: 0.0,
            curvature: 0.0,
            resolution: 0.1,
            grid_height: 320,
            grid_width: 320,
            geo_origin: GeoPoint {
                lat: 45.0647,
                lon: 7.6586,
            },
            rng_seed: 0,
        }
    }
}

impl FieldSpec {
    // negated comparisons so that NaN fails every check
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::InvalidSpec(m.to_string()));
        let (rmin, rmax) = self.plant_radius_range;
        if self.n_rows < 2 {
            return bad("n_rows must be at least 2");
        }
        if !(0.0..std::f64::consts::PI).contains(&self.row_orientation) {
            return bad("row_orientation must lie in [0, pi)");
        }
        if !(self.row_length > 0.0) {
            return bad("row_length must be positive");
        }
        if !(rmin > 0.0 && rmin <= rmax) {
            return bad("plant_radius_range must satisfy 0 < min <= max");
        }
        if !(self.inter_row_spacing > 2.0 * rmax) {
            return bad("inter_row_spacing must exceed twice the maximum plant radius");
        }
        if !(self.plant_spacing > 0.0) {
            return bad("plant_spacing must be positive");
        }
        if !(0.0..=1.0).contains(&self.hole_probability) {
            return bad("hole_probability must lie in [0, 1]");
        }
        if !(self.resolution > 0.0) {
            return bad("resolution must be positive");
        }
        if self.grid_height == 0 || self.grid_width == 0 {
            return bad("grid dimensions must be positive");
        }
        if !self.curvature.is_finite() {
            return bad("curvature must be finite");
        }
        if self.curvature != 0.0 {
            let half_width = 0.5 * (self.n_rows - 1) as f64 * self.inter_row_spacing + rmax;
            if half_width * self.curvature.abs() >= 0.5 {
                return bad("curvature too strong for the field width");
            }
            if self.row_length * self.curvature.abs() > std::f64::consts::FRAC_PI_2 {
                return bad("rows may bend by at most pi/2");
            }
        }
        Ok(())
    }

    pub fn plants_per_row(&self) -> usize {
        (self.row_length / self.plant_spacing + 1.0).floor() as usize
    }

    /// Parameter span between the first and last plant of a row.
    fn span(&self) -> f64 {
        (self.plants_per_row() - 1) as f64 * self.plant_spacing
    }

    fn row_offset(&self, row: usize) -> f64 {
        (row as f64 - 0.5 * (self.n_rows - 1) as f64) * self.inter_row_spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    /// Meters.
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Start,
    End,
}

/// A ground-truth corridor waypoint, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthWaypoint {
    pub position: Vec2,
    /// Corridor between rows `corridor` and `corridor + 1`.
    pub corridor: usize,
    pub side: Side,
}

/// Row frame: field coordinates `(t, o)` are the arc parameter along the
/// middle row and the signed offset along the row normal.
#[derive(Debug, Clone, PartialEq)]
struct RowFrame {
    center: Vec2,
    dir: Vec2,
    nrm: Vec2,
    curvature: f64,
}

impl RowFrame {
    fn point(&self, t: f64, o: f64) -> Vec2 {
        if self.curvature == 0.0 {
            return self.center + self.dir * t + self.nrm * o;
        }
        let r = 1.0 / self.curvature;
        let c = self.center + self.nrm * r;
        let phi = t * self.curvature;
        c + (-self.nrm * phi.cos() + self.dir * phi.sin()) * (r - o)
    }

    fn coords(&self, p: Vec2) -> (f64, f64) {
        if self.curvature == 0.0 {
            let q = p - self.center;
            return (q.dot(&self.dir), q.dot(&self.nrm));
        }
        let r = 1.0 / self.curvature;
        let q = p - (self.center + self.nrm * r);
        let (qd, qn) = (q.dot(&self.dir), q.dot(&self.nrm));
        let (phi, rho) = if r > 0.0 {
            (qd.atan2(-qn), q.norm())
        } else {
            ((-qd).atan2(qn), -q.norm())
        };
        (phi * r, r - rho)
    }

    fn tangent(&self, t: f64) -> Vec2 {
        let phi = t * self.curvature;
        self.nrm * phi.sin() + self.dir * phi.cos()
    }
}

/// Ground truth for everything downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldWorld {
    pub spec: FieldSpec,
    pub plants: Vec<Plant>,
    /// Sorted by projection on the row normal.
    pub row_polylines: Vec<Vec<Vec2>>,
    pub row_endpoints: Vec<(Vec2, Vec2)>,
    pub occupancy: OccupancyGrid,
    frame: RowFrame,
}

fn frame_for(spec: &FieldSpec) -> RowFrame {
    RowFrame {
        center: Vec2::new(
            0.5 * spec.grid_width as f64 * spec.resolution,
            0.5 * spec.grid_height as f64 * spec.resolution,
        ),
        dir: unit(spec.row_orientation),
        nrm: normal(spec.row_orientation),
        curvature: spec.curvature,
    }
}

/// Generates the field geometry and rasterizes it.
pub fn generate_field(spec: &FieldSpec) -> Result<FieldWorld, FieldError> {
    spec.validate()?;
    let frame = frame_for(spec);
    let span = spec.span();
    let per_row = spec.plants_per_row();
    let (rmin, rmax) = spec.plant_radius_range;

    check_fit(spec, &frame)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut plants = Vec::with_capacity(spec.n_rows * per_row);
    for row in 0..spec.n_rows {
        let o = spec.row_offset(row);
        for j in 0..per_row {
            let t = -0.5 * span + j as f64 * spec.plant_spacing;
            let hole = rng.random::<f64>() < spec.hole_probability;
            let radius = if rmax > rmin {
                rng.random_range(rmin..rmax)
            } else {
                rmin
            };
            if !hole {
                plants.push(Plant {
                    center: frame.point(t, o),
                    radius,
                });
            }
        }
    }

    let samples = ((span / spec.resolution).ceil() as usize).max(1);
    let mut row_polylines = Vec::with_capacity(spec.n_rows);
    let mut row_endpoints = Vec::with_capacity(spec.n_rows);
    for row in 0..spec.n_rows {
        let o = spec.row_offset(row);
        let line: Vec<Vec2> = (0..=samples)
            .map(|i| frame.point(-0.5 * span + span * i as f64 / samples as f64, o))
            .collect();
        row_endpoints.push((frame.point(-0.5 * span, o), frame.point(0.5 * span, o)));
        row_polylines.push(line);
    }

    let mut occupancy = OccupancyGrid::new(
        spec.grid_width,
        spec.grid_height,
        spec.resolution,
        spec.geo_origin,
    );
    for p in &plants {
        rasterize_disc(&mut occupancy, p.center / spec.resolution, p.radius / spec.resolution);
    }

    Ok(FieldWorld {
        spec: spec.clone(),
        plants,
        row_polylines,
        row_endpoints,
        occupancy,
        frame,
    })
}

fn check_fit(spec: &FieldSpec, frame: &RowFrame) -> Result<(), FieldError> {
    let span = spec.span();
    let rmax = spec.plant_radius_range.1;
    let margin = rmax + spec.resolution;
    let per_row = spec.plants_per_row();
    let (mut ext_x, mut ext_y) = (0.0f64, 0.0f64);
    for row in 0..spec.n_rows {
        let o = spec.row_offset(row);
        for j in 0..per_row {
            let p = frame.point(-0.5 * span + j as f64 * spec.plant_spacing, o) - frame.center;
            ext_x = ext_x.max(p.x.abs() + margin);
            ext_y = ext_y.max(p.y.abs() + margin);
        }
    }
    let required_width = (2.0 * ext_x / spec.resolution).ceil() as usize;
    let required_height = (2.0 * ext_y / spec.resolution).ceil() as usize;
    if required_width > spec.grid_width || required_height > spec.grid_height {
        return Err(FieldError::DoesNotFit {
            width: spec.grid_width,
            height: spec.grid_height,
            required_width,
            required_height,
        });
    }
    Ok(())
}

/// Fills every pixel whose center lies within `radius` of `center`
/// (pixel units), plus the pixel containing the center itself.
fn rasterize_disc(grid: &mut OccupancyGrid, center: Vec2, radius: f64) {
    let x0 = ((center.x - radius).floor().max(0.0)) as usize;
    let y0 = ((center.y - radius).floor().max(0.0)) as usize;
    let x1 = ((center.x + radius).ceil() as usize).min(grid.width() - 1);
    let y1 = ((center.y + radius).ceil() as usize).min(grid.height() - 1);
    let r2 = radius * radius;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - center.x;
            let dy = y as f64 + 0.5 - center.y;
            if dx * dx + dy * dy <= r2 {
                grid.set(x, y, OCCUPIED);
            }
        }
    }
    grid.set(center.x.floor() as usize, center.y.floor() as usize, OCCUPIED);
}

/// `R(±90°)·(a−b)/2 + (a+b)/2`; `positive` selects the `+90°` branch.
pub fn rotated_midpoint(a: Vec2, b: Vec2, positive: bool) -> Vec2 {
    let h = (a - b) * 0.5;
    let r = if positive {
        Vec2::new(-h.y, h.x)
    } else {
        Vec2::new(h.y, -h.x)
    };
    r + (a + b) * 0.5
}

impl FieldWorld {
    pub fn corridor_count(&self) -> usize {
        self.spec.n_rows - 1
    }

    /// Field coordinates `(t, o)` of a metric point.
    pub fn field_coords(&self, p: Vec2) -> (f64, f64) {
        self.frame.coords(p)
    }

    pub fn field_point(&self, t: f64, o: f64) -> Vec2 {
        self.frame.point(t, o)
    }

    /// Unit row tangent (pointing start → end) at arc parameter `t`.
    pub fn row_tangent(&self, t: f64) -> Vec2 {
        self.frame.tangent(t)
    }

    pub fn row_offset(&self, row: usize) -> f64 {
        self.spec.row_offset(row)
    }

    pub fn corridor_offset(&self, corridor: usize) -> f64 {
        0.5 * (self.row_offset(corridor) + self.row_offset(corridor + 1))
    }

    /// Parameter range `[-span/2, span/2]` covered by each row.
    pub fn row_span(&self) -> f64 {
        self.spec.span()
    }

    /// Index of the corridor containing `p` (meters): strictly between two
    /// adjacent row centerlines and within the row extent.
    pub fn corridor_at(&self, p: Vec2) -> Option<usize> {
        let (t, o) = self.field_coords(p);
        let half = 0.5 * self.row_span();
        if t < -half || t > half {
            return None;
        }
        (0..self.corridor_count()).find(|&i| o > self.row_offset(i) && o < self.row_offset(i + 1))
    }

    /// Ground-truth corridor waypoints in pixels: for each adjacent row pair,
    /// the start side then the end side.
    pub fn ground_truth_waypoints(&self) -> Vec<GroundTruthWaypoint> {
        let half = 0.5 * self.row_span();
        let res = self.spec.resolution;
        let mut out = Vec::with_capacity(2 * self.corridor_count());
        for corridor in 0..self.corridor_count() {
            for side in [Side::Start, Side::End] {
                let (a, b, inward) = match side {
                    Side::Start => (
                        self.row_endpoints[corridor].0,
                        self.row_endpoints[corridor + 1].0,
                        self.row_tangent(-half),
                    ),
                    Side::End => (
                        self.row_endpoints[corridor].1,
                        self.row_endpoints[corridor + 1].1,
                        -self.row_tangent(half),
                    ),
                };
                let mid = (a + b) * 0.5;
                let plus = rotated_midpoint(a, b, true);
                let minus = rotated_midpoint(a, b, false);
                let p = if (plus - mid).dot(&inward) >= (minus - mid).dot(&inward) {
                    plus
                } else {
                    minus
                };
                out.push(GroundTruthWaypoint {
                    position: p / res,
                    corridor,
                    side,
                });
            }
        }
        out
    }

    /// Ideal coverage trajectory: corridor midlines traversed in A-B-B-A
    /// order, joined by end-row turns placed `margin_px` beyond the
    /// corridor waypoints along the local row direction.
    pub fn ground_truth_path(&self, margin_px: f64) -> GlobalPath {
        let res = self.spec.resolution;
        let step = res;
        let wps = self.ground_truth_waypoints();
        let half = 0.5 * self.row_span();
        let mut points = Vec::new();
        let mut tags = Vec::new();
        let n = self.corridor_count();
        for corridor in 0..n {
            let start = wps[2 * corridor].position * res;
            let end = wps[2 * corridor + 1].position * res;
            let (from, to) = if corridor % 2 == 0 { (start, end) } else { (end, start) };
            let o = self.corridor_offset(corridor);
            let (t0, _) = self.field_coords(from);
            let (t1, _) = self.field_coords(to);
            let count = (((t1 - t0).abs() / step).ceil() as usize).max(1);
            let begin = points.len();
            for i in 0..=count {
                let p = if i == 0 {
                    from
                } else if i == count {
                    to
                } else {
                    self.field_point(t0 + (t1 - t0) * i as f64 / count as f64, o)
                };
                points.push(p);
                tags.push(SegmentTag::IntraRow(corridor));
            }
            debug_assert!(points.len() > begin);
            if corridor + 1 < n {
                let next_start = wps[2 * (corridor + 1)].position * res;
                let next_end = wps[2 * (corridor + 1) + 1].position * res;
                let next_from = if corridor % 2 == 0 { next_end } else { next_start };
                let outward = if corridor % 2 == 0 {
                    self.row_tangent(half)
                } else {
                    -self.row_tangent(-half)
                };
                let angle = outward.y.atan2(outward.x);
                let turn = plan_turn(to, next_from, angle, margin_px * res, step)
                    .expect("adjacent corridor waypoints never coincide");
                // first and last turn points coincide with the corridor ends
                for p in &turn.points[1..turn.points.len() - 1] {
                    points.push(*p);
                    tags.push(SegmentTag::Turn(corridor));
                }
            }
        }
        let geo = points.iter().map(|p| self.occupancy.meters_to_geo(*p)).collect();
        GlobalPath {
            points,
            geo: Some(geo),
            tags,
            step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n_rows: usize) -> FieldSpec {
        FieldSpec {
            n_rows,
            grid_width: 400,
            grid_height: 400,
            ..FieldSpec::default()
        }
    }

    #[test]
    fn plant_count_without_holes() {
        let spec = straight(5);
        let world = generate_field(&spec).unwrap();
        let per_row = (spec.row_length / spec.plant_spacing + 1.0).floor() as usize;
        assert_eq!(world.plants.len(), spec.n_rows * per_row);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FieldSpec {
            hole_probability: 0.2,
            curvature: 0.01,
            row_orientation: 0.7,
            ..straight(6)
        };
        let a = generate_field(&spec).unwrap();
        let b = generate_field(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_field(&FieldSpec { rng_seed: 1, ..spec }).unwrap();
        assert_ne!(a.plants, c.plants);
    }

    #[test]
    fn holes_are_sampled() {
        let spec = FieldSpec {
            hole_probability: 0.5,
            ..straight(5)
        };
        let world = generate_field(&spec).unwrap();
        let total = spec.n_rows * spec.plants_per_row();
        assert!(world.plants.len() < total * 3 / 4 && world.plants.len() > total / 4);
        let all = generate_field(&FieldSpec { hole_probability: 1.0, ..spec }).unwrap();
        assert!(all.plants.is_empty());
    }

    #[test]
    fn rejects_invalid_specs() {
        let cases = [
            FieldSpec { n_rows: 1, ..FieldSpec::default() },
            FieldSpec { inter_row_spacing: 0.7, ..FieldSpec::default() },
            FieldSpec { resolution: 0.0, ..FieldSpec::default() },
            FieldSpec { grid_width: 0, ..FieldSpec::default() },
            FieldSpec { row_orientation: 3.5, ..FieldSpec::default() },
            FieldSpec { hole_probability: 1.5, ..FieldSpec::default() },
        ];
        for spec in cases {
            assert!(matches!(generate_field(&spec), Err(FieldError::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn reports_required_size() {
        let spec = FieldSpec {
            row_length: 40.0,
            grid_width: 200,
            grid_height: 200,
            ..FieldSpec::default()
        };
        match generate_field(&spec) {
            Err(FieldError::DoesNotFit {
                required_width,
                required_height,
                ..
            }) => {
                assert!(required_width > 400 && required_width < 420, "{required_width}");
                assert!(required_height > 120 && required_height < 130, "{required_height}");
                let fitted = FieldSpec {
                    grid_width: required_width,
                    grid_height: required_height,
                    ..spec
                };
                assert!(generate_field(&fitted).is_ok());
            }
            other => panic!("expected DoesNotFit, got {other:?}"),
        }
    }

    #[test]
    fn plants_lie_on_their_rows_and_grid_values_are_binary() {
        let spec = FieldSpec {
            curvature: 0.02,
            row_orientation: 1.1,
            hole_probability: 0.1,
            ..straight(6)
        };
        let world = generate_field(&spec).unwrap();
        for p in &world.plants {
            let near = world.row_polylines.iter().any(|line| {
                line.windows(2).any(|w| {
                    crate::geometry::point_segment_distance(p.center, w[0], w[1]) <= 0.5 * p.radius
                })
            });
            assert!(near);
            let px = p.center / spec.resolution;
            assert!(world.occupancy.is_occupied_at(px));
        }
        assert!(world.occupancy.cells().iter().all(|&c| c == FREE || c == OCCUPIED));
        let offsets: Vec<f64> = world
            .row_endpoints
            .iter()
            .map(|(a, _)| world.field_coords(*a).1)
            .collect();
        assert!(offsets.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn field_coordinates_invert() {
        for curvature in [0.0, 0.015, -0.015] {
            let spec = FieldSpec {
                curvature,
                row_orientation: 0.4,
                ..straight(5)
            };
            let world = generate_field(&spec).unwrap();
            for &(t, o) in &[(0.0, 0.0), (-8.0, 3.1), (9.5, -5.0)] {
                let p = world.field_point(t, o);
                let (t2, o2) = world.field_coords(p);
                assert!((t - t2).abs() < 1e-9 && (o - o2).abs() < 1e-9, "{curvature}: {t},{o} -> {t2},{o2}");
            }
        }
    }

    #[test]
    fn adjacent_rows_are_28_px_apart() {
        let spec = straight(5);
        let world = generate_field(&spec).unwrap();
        // measure the occupied band centers on a column through the first plants
        let x = (world.row_endpoints[0].0.x / spec.resolution) as usize;
        let mut bands = Vec::new();
        let mut y = 0;
        while y < spec.grid_height {
            if world.occupancy.get(x, y) == OCCUPIED {
                let start = y;
                while y < spec.grid_height && world.occupancy.get(x, y) == OCCUPIED {
                    y += 1;
                }
                bands.push(0.5 * (start + y) as f64);
            }
            y += 1;
        }
        assert_eq!(bands.len(), 5);
        for w in bands.windows(2) {
            assert!((w[1] - w[0] - 28.0).abs() <= 1.0, "{bands:?}");
        }
    }

    #[test]
    fn rotated_midpoint_branches() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(2.0, 0.0);
        assert_eq!(rotated_midpoint(a, b, true), Vec2::new(1.0, -1.0));
        assert_eq!(rotated_midpoint(a, b, false), Vec2::new(1.0, 1.0));
        assert_eq!(rotated_midpoint(a, a, true), a);
    }

    #[test]
    fn gt_waypoints_lie_inside_corridors() {
        let spec = straight(6);
        let world = generate_field(&spec).unwrap();
        let wps = world.ground_truth_waypoints();
        assert_eq!(wps.len(), 2 * (spec.n_rows - 1));
        for wp in &wps {
            let m = wp.position * spec.resolution;
            let y0 = world.row_endpoints[wp.corridor].0.y;
            let y1 = world.row_endpoints[wp.corridor + 1].0.y;
            assert!(m.y > y0 && m.y < y1);
            assert!(!world.occupancy.is_occupied_at(wp.position));
            assert_eq!(world.corridor_at(m), Some(wp.corridor));
        }
    }

    #[test]
    fn gt_path_is_centered_and_free() {
        let spec = straight(5);
        let world = generate_field(&spec).unwrap();
        let path = world.ground_truth_path(20.0);
        let rmax = spec.plant_radius_range.1;
        let bound = 0.5 * spec.inter_row_spacing - rmax;
        for (p, tag) in path.points.iter().zip(&path.tags) {
            if let SegmentTag::IntraRow(c) = tag {
                let (_, o) = world.field_coords(*p);
                assert!((o - world.corridor_offset(*c)).abs() < 1e-9);
            }
            let clearance = world
                .plants
                .iter()
                .map(|pl| (p - pl.center).norm() - pl.radius)
                .fold(f64::INFINITY, f64::min);
            assert!(clearance >= bound - 1e-9, "clearance {clearance} at {p:?}");
            assert!(!world.occupancy.is_occupied_at(p / spec.resolution));
        }
        assert!(path.points.windows(2).all(|w| (w[1] - w[0]).norm() <= path.step + 1e-9));
    }

    #[test]
    fn gt_turn_apex_is_two_meters_beyond_the_last_plant() {
        let spec = straight(3);
        let world = generate_field(&spec).unwrap();
        let path = world.ground_truth_path(20.0);
        let row_end_x = world.row_endpoints[1].1.x;
        let apex_x = path
            .points
            .iter()
            .zip(&path.tags)
            .filter(|(_, t)| matches!(t, SegmentTag::Turn(0)))
            .map(|(p, _)| p.x)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((apex_x - row_end_x - 2.0).abs() < 1e-9, "{}", apex_x - row_end_x);
    }
}
