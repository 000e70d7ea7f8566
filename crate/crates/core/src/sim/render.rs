use serde::{Deserialize, Serialize};

use crate::field::Plant;
use crate::geometry::Vec2;
use crate::rowctl::MaskFrame;

/// Uniform bucket grid over plant centers.
#[derive(Debug, Clone)]
pub struct PlantIndex {
    plants: Vec<Plant>,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    max_radius: f64,
}

impl PlantIndex {
    pub fn new(plants: &[Plant], cell: f64) -> Self {
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in plants {
            lo = lo.inf(&p.center);
            hi = hi.sup(&p.center);
        }
        if plants.is_empty() {
            lo = Vec2::zeros();
            hi = Vec2::zeros();
        }
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, p) in plants.iter().enumerate() {
            let cx = ((p.center.x - lo.x) / cell).floor() as usize;
            let cy = ((p.center.y - lo.y) / cell).floor() as usize;
            buckets[cy.min(ny - 1) * nx + cx.min(nx - 1)].push(i as u32);
        }
        Self {
            plants: plants.to_vec(),
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
            max_radius: plants.iter().map(|p| p.radius).fold(0.0, f64::max),
        }
    }

    pub fn plants(&self) -> &[Plant] {
        &self.plants
    }

    /// Calls `f` for every plant whose center lies within `radius` of `p`
    /// (and possibly a few more).
    fn for_near(&self, p: Vec2, radius: f64, mut f: impl FnMut(&Plant)) {
        if self.plants.is_empty() {
            return;
        }
        let cell_range = |v: f64, o: f64, n: usize| {
            let lo = ((v - radius - o) / self.cell).floor();
            let hi = ((v + radius - o) / self.cell).floor();
            if hi < 0.0 || lo > (n - 1) as f64 {
                None
            } else {
                Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
            }
        };
        let (Some((x0, x1)), Some((y0, y1))) =
            (cell_range(p.x, self.origin.x, self.nx), cell_range(p.y, self.origin.y, self.ny))
        else {
            return;
        };
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &i in &self.buckets[cy * self.nx + cx] {
                    f(&self.plants[i as usize]);
                }
            }
        }
    }

    /// Plants whose disc comes within `radius` of `p`.
    pub fn within(&self, p: Vec2, radius: f64) -> Vec<Plant> {
        let mut out = Vec::new();
        self.for_near(p, radius + self.max_radius, |pl| {
            if (pl.center - p).norm() - pl.radius <= radius {
                out.push(*pl);
            }
        });
        out
    }

    /// Distance from `p` to the nearest plant surface, searched up to
    /// `max_range`; `INFINITY` when nothing is that close.
    pub fn clearance(&self, p: Vec2, max_range: f64) -> f64 {
        let mut best = f64::INFINITY;
        self.for_near(p, max_range + self.max_radius, |pl| {
            best = best.min((pl.center - p).norm() - pl.radius);
        });
        if best <= max_range {
            best
        } else {
            f64::INFINITY
        }
    }
}

/// Distance along a unit ray to a circle, if hit in front of the origin.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(&dir);
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 || b > 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, radians.
    pub fov: f64,
    /// Meters.
    pub range: f64,
    /// Height of the optical center above ground, meters.
    pub mount_height: f64,
    /// Rendered plant height, meters.
    pub plant_height: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            fov: std::f64::consts::FRAC_PI_2,
            range: 10.0,
            mount_height: 0.5,
            plant_height: 1.2,
        }
    }
}

impl CameraConfig {
    /// Azimuth of column `j` relative to the heading, positive to the
    /// left; columns span the field of view linearly.
    pub fn column_azimuth(&self, j: usize) -> f64 {
        // symmetric about the optical axis in floating point
        -(j as f64 + 0.5 - 0.5 * self.width as f64) / self.width as f64 * self.fov
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov).tan()
    }
}

/// Renders the plant mask and depth seen from `(x, y, yaw)`.
pub fn render_mask(index: &PlantIndex, pose: (f64, f64, f64), cam: &CameraConfig, timestamp: f64) -> MaskFrame {
    let origin = Vec2::new(pose.0, pose.1);
    let (w, h) = (cam.width, cam.height);
    let mut frame = MaskFrame::empty(w, h, timestamp);
    let half_fov = 0.5 * cam.fov;
    let heading = crate::geometry::unit(pose.2);
    let mut visible = Vec::new();
    index.for_near(origin, cam.range + index.max_radius, |p| {
        let rel = p.center - origin;
        let dist = rel.norm();
        if dist - p.radius > cam.range {
            return;
        }
        if dist > p.radius {
            let az = crate::geometry::cross(heading, rel).atan2(heading.dot(&rel));
            let spread = (p.radius / dist).asin();
            if az.abs() - spread > half_fov {
                return;
            }
        }
        visible.push(*p);
    });

    let f = cam.focal();
    let cy = 0.5 * h as f64;
    for j in 0..w {
        let az = cam.column_azimuth(j);
        let dir = crate::geometry::unit(pose.2 + az);
        let mut hit = f64::INFINITY;
        for p in &visible {
            if let Some(t) = ray_circle(origin, dir, p.center, p.radius) {
                hit = hit.min(t);
            }
        }
        if hit > cam.range {
            continue;
        }
        // vertical extent from the ground to the plant top, pinhole model
        let z = (hit * az.cos()).max(1e-6);
        let top = cy - f * (cam.plant_height - cam.mount_height) / z;
        let bottom = cy + f * cam.mount_height / z;
        let r0 = top.max(0.0).ceil() as usize;
        let r1 = (bottom.min(h as f64)).ceil() as usize;
        for r in r0.min(h)..r1.min(h) {
            frame.seg[r * w + j] = 1;
            frame.depth[r * w + j] = hit as f32;
        }
    }
    frame
}
