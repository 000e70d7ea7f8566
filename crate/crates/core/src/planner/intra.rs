use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::field::OccupancyGrid;
use crate::geometry::{densify, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRowConfig {
    /// Output spacing, pixels.
    pub step: f64,
    /// Half-width of the lateral profile scanned at each sample, pixels.
    pub search_radius: f64,
    /// Gaps narrower than this are reported as blocked, pixels.
    pub robot_diameter: f64,
    /// Half-window of the median filter applied to the lateral offsets.
    pub smoothing: usize,
    /// Lateral profile resolution, pixels.
    pub profile_step: f64,
}

impl Default for IntraRowConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            search_radius: 28.0,
            robot_diameter: 5.0,
            smoothing: 5,
            profile_step: 0.5,
        }
    }
}

/// Free run around a sample along the lateral axis. Bounds are `None`
/// when no obstacle was met within the search radius.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Gap {
    lo: Option<f64>,
    hi: Option<f64>,
}

fn lateral_gap(grid: &OccupancyGrid, q: Vec2, nrm: Vec2, cfg: &IntraRowConfig) -> Option<Gap> {
    let n = (cfg.search_radius / cfg.profile_step).ceil() as i64;
    let free = |k: i64| !grid.is_occupied_at(q + nrm * (k as f64 * cfg.profile_step));
    // closest free profile sample to the chord
    let seed = (0..=n).flat_map(|k| [k, -k]).find(|&k| free(k))?;
    let mut lo = seed;
    while lo > -n && free(lo - 1) {
        lo -= 1;
    }
    let mut hi = seed;
    while hi < n && free(hi + 1) {
        hi += 1;
    }
    let bound = |k: i64, open: bool| (!open).then_some(k as f64 * cfg.profile_step);
    Some(Gap {
        lo: bound(lo, lo == -n && free(-n)),
        hi: bound(hi, hi == n && free(n)),
    })
}

fn median_filter(values: &[f64], half: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let mut w = values[lo..hi].to_vec();
            w.sort_by(f64::total_cmp);
            w[w.len() / 2]
        })
        .collect()
}

/// Path from `start` to `end` (pixels) that follows the middle of the
/// free corridor around the straight chord. The endpoints are kept.
/// `segment` only labels errors.
pub fn plan_intra_row(
    start: Vec2,
    end: Vec2,
    grid: &OccupancyGrid,
    cfg: &IntraRowConfig,
    segment: usize,
) -> Result<Vec<Vec2>, PlanError> {
    let chord = end - start;
    let len = chord.norm();
    if len < 1e-9 {
        return Ok(vec![start, end]);
    }
    let dir = chord / len;
    let nrm = Vec2::new(-dir.y, dir.x);
    let base = densify(&[start, end], cfg.step);
    let m = base.len() - 1;

    let mut offsets: Vec<Option<f64>> = vec![None; base.len()];
    let mut widths = Vec::new();
    for (k, q) in base.iter().enumerate().take(m).skip(1) {
        let Some(gap) = lateral_gap(grid, *q, nrm, cfg) else {
            return Err(PlanError::BlockedCorridor { segment, at: *q });
        };
        if let (Some(lo), Some(hi)) = (gap.lo, gap.hi) {
            let width = hi - lo + cfg.profile_step;
            if width < cfg.robot_diameter {
                return Err(PlanError::BlockedCorridor { segment, at: *q });
            }
            offsets[k] = Some(0.5 * (lo + hi));
            widths.push(width);
        }
    }
    // endpoints anchor the path on the waypoints
    offsets[0] = Some(0.0);
    offsets[m] = Some(0.0);

    let known: Vec<usize> = (0..=m).filter(|&k| offsets[k].is_some()).collect();
    let mut filled = vec![0.0; m + 1];
    for w in known.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (oa, ob) = (offsets[a].unwrap(), offsets[b].unwrap());
        for (k, f) in filled.iter_mut().enumerate().take(b + 1).skip(a) {
            *f = oa + (ob - oa) * (k - a) as f64 / (b - a) as f64;
        }
    }
    let mut smooth = median_filter(&filled, cfg.smoothing);
    smooth[0] = 0.0;
    smooth[m] = 0.0;
    if !widths.is_empty() {
        widths.sort_by(f64::total_cmp);
        let limit = 0.5 * widths[widths.len() / 2];
        for o in &mut smooth {
            *o = o.clamp(-limit, limit);
        }
    }
    let points: Vec<Vec2> = base
        .iter()
        .zip(&smooth)
        .map(|(q, o)| q + nrm * *o)
        .collect();
    Ok(densify(&points, cfg.step))
}
