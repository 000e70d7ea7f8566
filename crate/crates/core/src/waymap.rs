//! Three-channel waypoint output maps: exact encoding of known waypoints,
//! decoding with confidence thresholding and suppression, a noise model
//! for imperfect predictions, and AP scoring.
//!
//! A map subsamples an `H × W` grid by `k`. Cell `u = (ux, uy)` covers
//! pixels `[k·ux, k·(ux+1)) × [k·uy, k·(uy+1))`; its offsets `Δ ∈ [-1, 1]`
//! place the waypoint at `k·(u + (Δ + 1)/2)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::IoError;
use crate::geometry::Vec2;

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.9;
pub const DEFAULT_SUPPRESSION_DISTANCE: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum WaymapError {
    #[error("grid {height}x{width} is not divisible by k={k}")]
    NotDivisible { height: usize, width: usize, k: usize },
    #[error("waypoint ({x}, {y}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("two waypoints fall into cell ({0}, {1}); k is too coarse for this field")]
    CellCollision(usize, usize),
    #[error("confidence list has {got} entries for {expected} waypoints")]
    ConfidenceLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointMap {
    u_h: usize,
    u_w: usize,
    k: usize,
    confidence: Vec<f64>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedWaypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl PredictedWaypoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

impl WaypointMap {
    pub fn empty(height: usize, width: usize, k: usize) -> Result<Self, WaymapError> {
        if k == 0 || !height.is_multiple_of(k) || !width.is_multiple_of(k) {
            return Err(WaymapError::NotDivisible { height, width, k });
        }
        let (u_h, u_w) = (height / k, width / k);
        Ok(Self {
            u_h,
            u_w,
            k,
            confidence: vec![0.0; u_h * u_w],
            dx: vec![0.0; u_h * u_w],
            dy: vec![0.0; u_h * u_w],
        })
    }

    pub fn u_h(&self) -> usize {
        self.u_h
    }

    pub fn u_w(&self) -> usize {
        self.u_w
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn idx(&self, ux: usize, uy: usize) -> usize {
        uy * self.u_w + ux
    }

    /// `(P, Δx, Δy)` of cell `(ux, uy)`.
    pub fn cell(&self, ux: usize, uy: usize) -> (f64, f64, f64) {
        let i = self.idx(ux, uy);
        (self.confidence[i], self.dx[i], self.dy[i])
    }

    pub fn set_cell(&mut self, ux: usize, uy: usize, p: f64, dx: f64, dy: f64) {
        let i = self.idx(ux, uy);
        self.confidence[i] = p.clamp(0.0, 1.0);
        self.dx[i] = dx.clamp(-1.0, 1.0);
        self.dy[i] = dy.clamp(-1.0, 1.0);
    }

    pub fn confidence_plane(&self) -> &[f64] {
        &self.confidence
    }

    fn project(&self, ux: usize, uy: usize) -> Vec2 {
        let i = self.idx(ux, uy);
        let k = self.k as f64;
        Vec2::new(
            k * (ux as f64 + (self.dx[i] + 1.0) / 2.0),
            k * (uy as f64 + (self.dy[i] + 1.0) / 2.0),
        )
    }

    /// Binary layout: text header `WAYMAP\n<U_H> <U_W> <k>\n` followed by
    /// the P, Δx and Δy planes as little-endian `f32`, row-major.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "WAYMAP\n{} {} {}\n", self.u_h, self.u_w, self.k)?;
        for plane in [&self.confidence, &self.dx, &self.dy] {
            for v in plane.iter() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, IoError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let fmt = |m: &str| IoError::Format(m.to_string());
        let first_nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| fmt("missing header"))?;
        if &bytes[..first_nl] != b"WAYMAP" {
            return Err(fmt("missing WAYMAP magic"));
        }
        let rest = &bytes[first_nl + 1..];
        let second_nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| fmt("missing dims"))?;
        let dims: Vec<usize> = std::str::from_utf8(&rest[..second_nl])
            .map_err(|_| fmt("non-utf8 header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| fmt("bad dimension")))
            .collect::<Result<_, _>>()?;
        let [u_h, u_w, k] = dims[..] else {
            return Err(fmt("header needs U_H U_W k"));
        };
        let data = &rest[second_nl + 1..];
        let n = u_h * u_w;
        if data.len() != 3 * n * 4 {
            return Err(fmt("plane data has the wrong length"));
        }
        let plane = |p: usize| -> Vec<f64> {
            data[p * n * 4..(p + 1) * n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        };
        let map = Self {
            u_h,
            u_w,
            k,
            confidence: plane(0),
            dx: plane(1),
            dy: plane(2),
        };
        let in_range = map.confidence.iter().all(|v| (0.0..=1.0).contains(v))
            && map.dx.iter().chain(&map.dy).all(|v| (-1.0..=1.0).contains(v));
        if !in_range {
            return Err(fmt("channel values out of range"));
        }
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

/// Writes the exact output map a perfect detector would produce for
/// `waypoints` (pixel coordinates).
pub fn encode_waypoint_map(
    waypoints: &[Vec2],
    height: usize,
    width: usize,
    k: usize,
    confidence: Option<&[f64]>,
) -> Result<WaypointMap, WaymapError> {
    let mut map = WaypointMap::empty(height, width, k)?;
    if let Some(c) = confidence {
        if c.len() != waypoints.len() {
            return Err(WaymapError::ConfidenceLength {
                expected: waypoints.len(),
                got: c.len(),
            });
        }
    }
    let kf = k as f64;
    for (i, p) in waypoints.iter().enumerate() {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64) {
            return Err(WaymapError::OutOfBounds { x: p.x, y: p.y });
        }
        let ux = (p.x / kf).floor() as usize;
        let uy = (p.y / kf).floor() as usize;
        let idx = map.idx(ux, uy);
        if map.confidence[idx] > 0.0 {
            return Err(WaymapError::CellCollision(ux, uy));
        }
        let conf = confidence.map_or(1.0, |c| c[i]);
        map.confidence[idx] = conf.clamp(f64::MIN_POSITIVE, 1.0);
        map.dx[idx] = 2.0 * (p.x / kf - ux as f64) - 1.0;
        map.dy[idx] = 2.0 * (p.y / kf - uy as f64) - 1.0;
    }
    Ok(map)
}

/// Greedy suppression: walking points by descending confidence, a point is
/// dropped when a kept point lies within `distance`. Output is sorted by
/// descending confidence; ties keep input order.
pub fn suppress(points: &[PredictedWaypoint], distance: f64) -> Vec<PredictedWaypoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].confidence.total_cmp(&points[a].confidence));
    let mut kept: Vec<PredictedWaypoint> = Vec::new();
    for i in order {
        let p = points[i];
        if kept.iter().all(|q| (q.position() - p.position()).norm() > distance) {
            kept.push(p);
        }
    }
    kept
}

/// Cells with `P > c_thr` projected to pixels, then suppressed.
pub fn decode_waypoint_map(map: &WaypointMap, c_thr: f64, d_thr: f64) -> Vec<PredictedWaypoint> {
    let mut candidates = Vec::new();
    for uy in 0..map.u_h {
        for ux in 0..map.u_w {
            let p = map.confidence[map.idx(ux, uy)];
            if p > c_thr {
                let pos = map.project(ux, uy);
                candidates.push(PredictedWaypoint {
                    x: pos.x,
                    y: pos.y,
                    confidence: p,
                });
            }
        }
    }
    suppress(&candidates, d_thr)
}

/// Parameters of the prediction noise model. All zero is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapNoise {
    pub confidence_sigma: f64,
    pub offset_sigma: f64,
    pub spurious_rate: f64,
    pub dropout_rate: f64,
    /// Confidence range of spurious cells.
    pub spurious_confidence: (f64, f64),
}

impl Default for MapNoise {
    fn default() -> Self {
        Self {
            confidence_sigma: 0.0,
            offset_sigma: 0.0,
            spurious_rate: 0.0,
            dropout_rate: 0.0,
            spurious_confidence: (0.9, 1.0),
        }
    }
}

/// Adds clipped Gaussian channel noise, drops true cells and injects
/// spurious confident cells. Every cell consumes the same number of draws,
/// so the output depends only on `(map, noise, seed)`.
pub fn perturb_map(map: &WaypointMap, noise: &MapNoise, seed: u64) -> WaypointMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = map.clone();
    let (lo, hi) = noise.spurious_confidence;
    for i in 0..out.confidence.len() {
        let gate: f64 = rng.random();
        let n_p: f64 = std.sample(&mut rng);
        let n_x: f64 = std.sample(&mut rng);
        let n_y: f64 = std.sample(&mut rng);
        let u_p: f64 = rng.random();
        let u_x: f64 = rng.random();
        let u_y: f64 = rng.random();
        if out.confidence[i] > 0.0 {
            if gate < noise.dropout_rate {
                out.confidence[i] = 0.0;
                out.dx[i] = 0.0;
                out.dy[i] = 0.0;
                continue;
            }
            if noise.confidence_sigma > 0.0 {
                out.confidence[i] = (out.confidence[i] + noise.confidence_sigma * n_p).clamp(0.0, 1.0);
            }
            if noise.offset_sigma > 0.0 {
                out.dx[i] = (out.dx[i] + noise.offset_sigma * n_x).clamp(-1.0, 1.0);
                out.dy[i] = (out.dy[i] + noise.offset_sigma * n_y).clamp(-1.0, 1.0);
            }
        } else if gate < noise.spurious_rate {
            out.confidence[i] = (lo + (hi - lo) * u_p).clamp(0.0, 1.0);
            out.dx[i] = 2.0 * u_x - 1.0;
            out.dy[i] = 2.0 * u_y - 1.0;
        }
    }
    out
}

/// All-points interpolated average precision. A prediction is a true
/// positive when the nearest still-unmatched truth lies within `d_r`.
/// Returns `None` when there is no ground truth.
pub fn average_precision(pred: &[PredictedWaypoint], truth: &[Vec2], d_r: f64) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[b].confidence.total_cmp(&pred[a].confidence));
    let mut matched = vec![false; truth.len()];
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(pred.len());
    let mut recall = Vec::with_capacity(pred.len());
    for (rank, &i) in order.iter().enumerate() {
        let p = pred[i].position();
        let best = truth
            .iter()
            .enumerate()
            .filter(|(j, _)| !matched[*j])
            .map(|(j, t)| (j, (t - p).norm()))
            .filter(|(_, d)| *d <= d_r)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = best {
            matched[j] = true;
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / truth.len() as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Some(ap)
}

pub fn write_predictions_csv(path: &Path, preds: &[PredictedWaypoint]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in preds {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictedWaypoint>, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(IoError::from)).collect()
}
