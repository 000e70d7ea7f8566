use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_field, FieldSpec, GeoPoint};

/// Uniform ranges for randomized fields. Every range is inclusive of its
/// lower bound; `max_bend` bounds the total heading change along a row
/// (radians), from which the curvature is drawn as `bend / row_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRanges {
    pub corridors: (usize, usize),
    pub inter_row_spacing: (f64, f64),
    pub row_length: (f64, f64),
    pub plant_radius: (f64, f64),
    pub plant_spacing: (f64, f64),
    pub hole_probability: (f64, f64),
    pub max_bend: f64,
    pub resolution: f64,
    pub grid_size: usize,
}

impl Default for FieldRanges {
    fn default() -> Self {
        Self {
            corridors: (2, 30),
            inter_row_spacing: (2.0, 3.5),
            row_length: (15.0, 60.0),
            plant_radius: (0.15, 0.45),
            plant_spacing: (0.6, 1.2),
            hole_probability: (0.0, 0.1),
            max_bend: 0.05,
            resolution: 0.1,
            grid_size: 800,
        }
    }
}

impl FieldRanges {
    /// Vineyard-like fields for closed-loop missions: wide corridors and
    /// dense, rarely missing plants.
    pub fn vineyard() -> Self {
        Self {
            corridors: (2, 10),
            inter_row_spacing: (2.5, 3.2),
            row_length: (12.0, 40.0),
            plant_radius: (0.25, 0.45),
            plant_spacing: (0.6, 1.0),
            hole_probability: (0.0, 0.05),
            max_bend: 0.05,
            resolution: 0.1,
            grid_size: 800,
        }
    }

    /// Draws a spec that fits the grid. Deterministic per `seed`.
    pub fn sample(&self, seed: u64) -> FieldSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
        let size_m = self.grid_size as f64 * self.resolution;
        loop {
            let corridors = rng.random_range(self.corridors.0..=self.corridors.1);
            let n_rows = corridors + 1;
            let alpha = rng.random_range(0.0..std::f64::consts::PI);
            let r_hi = rng.random_range(self.plant_radius.0..=self.plant_radius.1);
            let r_lo = rng.random_range(self.plant_radius.0..=r_hi);
            let spacing_lo = self.inter_row_spacing.0.max(2.0 * r_hi + 1.2);
            if spacing_lo > self.inter_row_spacing.1 {
                continue;
            }
            let spacing = rng.random_range(spacing_lo..=self.inter_row_spacing.1);
            let plant_spacing = rng.random_range(self.plant_spacing.0..=self.plant_spacing.1);
            let holes = rng.random_range(self.hole_probability.0..=self.hole_probability.1);
            let bend = rng.random_range(-self.max_bend..=self.max_bend);

            // largest row length whose straight footprint fits with a 3 m border
            let width = (n_rows - 1) as f64 * spacing + 2.0 * r_hi;
            let avail = size_m - 6.0;
            let (s, c) = (alpha.sin().abs(), alpha.cos().abs());
            let fit_x = if c > 1e-9 { (avail - width * s) / c } else { f64::INFINITY };
            let fit_y = if s > 1e-9 { (avail - width * c) / s } else { f64::INFINITY };
            let l_max = fit_x.min(fit_y).min(self.row_length.1);
            if l_max < self.row_length.0 {
                continue;
            }
            let row_length = rng.random_range(self.row_length.0..=l_max);
            let spec = FieldSpec {
                n_rows,
                row_orientation: alpha,
                row_length,
                inter_row_spacing: spacing,
                plant_radius_range: (r_lo, r_hi),
                plant_spacing,
                hole_probability: holes,
                curvature: bend / row_length,
                resolution: self.resolution,
                grid_height: self.grid_size,
                grid_width: self.grid_size,
                geo_origin: GeoPoint {
                    lat: 45.0647,
                    lon: 7.6586,
                },
                rng_seed: rng.random(),
            };
            if generate_field(&spec).is_ok() {
                return spec;
            }
        }
    }
}
