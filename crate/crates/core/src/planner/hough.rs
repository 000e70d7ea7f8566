//! Progressive probabilistic Hough transform over occupied grid cells and
//! the row orientation estimate built on it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::field::OccupancyGrid;
use crate::geometry::{wrap_half_turn, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoughConfig {
    pub angle_step_deg: f64,
    pub vote_threshold: u32,
    /// Largest run of free pixels bridged while walking along a line.
    pub line_gap: usize,
    /// Absolute minimum segment length, pixels.
    pub min_length: f64,
    /// Segments shorter than this fraction of the longest detected
    /// segment (the row length estimate) are ignored by the orientation
    /// estimate.
    pub min_length_fraction: f64,
    pub seed: u64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            angle_step_deg: 1.0,
            vote_threshold: 20,
            line_gap: 10,
            min_length: 10.0,
            min_length_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: Vec2,
    pub b: Vec2,
}

impl LineSegment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Undirected angle in `[0, π)`.
    pub fn angle(&self) -> f64 {
        let d = self.b - self.a;
        wrap_half_turn(d.y.atan2(d.x))
    }
}

struct Accumulator {
    n_angles: usize,
    n_rho: usize,
    rho_offset: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    votes: Vec<u32>,
}

impl Accumulator {
    fn new(width: usize, height: usize, step: f64) -> Self {
        let n_angles = (std::f64::consts::PI / step).round() as usize;
        let max_rho = ((width * width + height * height) as f64).sqrt().ceil();
        let n_rho = 2 * max_rho as usize + 1;
        let (cos, sin) = (0..n_angles)
            .map(|n| {
                let t = n as f64 * step;
                (t.cos(), t.sin())
            })
            .unzip();
        Self {
            n_angles,
            n_rho,
            rho_offset: max_rho,
            cos,
            sin,
            votes: vec![0; n_angles * n_rho],
        }
    }

    fn bin(&self, n: usize, x: f64, y: f64) -> usize {
        let r = (x * self.cos[n] + y * self.sin[n] + self.rho_offset).round() as usize;
        n * self.n_rho + r
    }

    /// Adds the votes of a point; returns `(best count, best angle index)`.
    fn vote(&mut self, x: f64, y: f64) -> (u32, usize) {
        let mut best = (0, 0);
        for n in 0..self.n_angles {
            let b = self.bin(n, x, y);
            self.votes[b] += 1;
            if self.votes[b] > best.0 {
                best = (self.votes[b], n);
            }
        }
        best
    }

    fn unvote(&mut self, x: f64, y: f64) {
        for n in 0..self.n_angles {
            let b = self.bin(n, x, y);
            self.votes[b] -= 1;
        }
    }
}

/// Detects line segments among occupied cells. The visiting order of the
/// points is a seeded shuffle, so results are reproducible.
pub fn detect_segments(grid: &OccupancyGrid, cfg: &HoughConfig) -> Vec<LineSegment> {
    let (w, h) = (grid.width(), grid.height());
    let step = cfg.angle_step_deg.to_radians();
    let mut acc = Accumulator::new(w, h, step);
    let mut mask: Vec<bool> = grid.cells().iter().map(|&c| c != 0).collect();
    let mut voted = vec![false; w * h];
    let mut points: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask[y * w + x])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    points.shuffle(&mut rng);

    let mut segments = Vec::new();
    for &(px, py) in &points {
        let idx = py * w + px;
        if !mask[idx] {
            continue;
        }
        let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
        let (count, n) = acc.vote(cx, cy);
        voted[idx] = true;
        if count < cfg.vote_threshold {
            continue;
        }
        // line direction for normal angle theta is (-sin, cos)
        let dir = Vec2::new(-acc.sin[n], acc.cos[n]);
        let stride = dir / dir.x.abs().max(dir.y.abs());
        let start = Vec2::new(cx, cy);
        let mut ends = [start, start];
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut gap = 0;
            let mut p = start;
            loop {
                let (ix, iy) = (p.x.floor(), p.y.floor());
                if ix < 0.0 || iy < 0.0 || ix >= w as f64 || iy >= h as f64 {
                    break;
                }
                if mask[iy as usize * w + ix as usize] {
                    gap = 0;
                    ends[k] = Vec2::new(ix + 0.5, iy + 0.5);
                } else {
                    gap += 1;
                    if gap > cfg.line_gap {
                        break;
                    }
                }
                p += stride * sign;
            }
        }
        let good = (ends[0] - ends[1]).norm() >= cfg.min_length;
        // clear the walked pixels; forget their votes if the line is kept
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut p = start;
            loop {
                let (ix, iy) = (p.x.floor() as usize, p.y.floor() as usize);
                let i = iy * w + ix;
                if mask[i] {
                    if good && voted[i] {
                        acc.unvote(ix as f64 + 0.5, iy as f64 + 0.5);
                        voted[i] = false;
                    }
                    mask[i] = false;
                }
                if ix == ends[k].x.floor() as usize && iy == ends[k].y.floor() as usize {
                    break;
                }
                p += stride * sign;
            }
        }
        if good {
            segments.push(LineSegment { a: ends[1], b: ends[0] });
        }
    }
    segments
}

/// Length-weighted circular mean (period π) of the segment angles.
pub fn mean_orientation(segments: &[LineSegment]) -> Option<f64> {
    let (mut c, mut s) = (0.0, 0.0);
    for seg in segments {
        let l = seg.length();
        let t = 2.0 * seg.angle();
        c += l * t.cos();
        s += l * t.sin();
    }
    if c == 0.0 && s == 0.0 {
        return None;
    }
    Some(wrap_half_turn(0.5 * s.atan2(c)))
}

/// Dominant row direction in `[0, π)`, in pixel axes.
pub fn estimate_row_orientation(grid: &OccupancyGrid, cfg: &HoughConfig) -> Result<f64, PlanError> {
    let segments = detect_segments(grid, cfg);
    let longest = segments.iter().map(LineSegment::length).fold(0.0, f64::max);
    let cutoff = cfg.min_length.max(cfg.min_length_fraction * longest);
    let kept: Vec<LineSegment> = segments.into_iter().filter(|s| s.length() >= cutoff).collect();
    mean_orientation(&kept).ok_or(PlanError::NoLinesFound)
}
