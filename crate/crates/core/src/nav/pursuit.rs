use serde::{Deserialize, Serialize};

use super::NavError;
use crate::geometry::Vec2;
use crate::rowctl::VelocityCommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PursuitConfig {
    /// Meters.
    pub lookahead: f64,
    pub v_ref: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// How far ahead of the progress hint the nearest point is searched,
    /// meters of path.
    pub search_ahead: f64,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            lookahead: 1.0,
            v_ref: 0.5,
            v_max: 0.5,
            omega_max: 1.5,
            search_ahead: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitOutput {
    pub command: VelocityCommand,
    /// Index of the path point nearest to the robot; feed it back as the
    /// next hint.
    pub nearest: usize,
    pub target: usize,
    pub curvature: f64,
}

/// Pure pursuit over `path` starting the nearest-point search at `hint`.
/// The pose is `(x, y, yaw)` in the path frame.
pub fn pure_pursuit_command(
    pose: (f64, f64, f64),
    path: &[Vec2],
    hint: usize,
    cfg: &PursuitConfig,
) -> Result<PursuitOutput, NavError> {
    if path.is_empty() || hint >= path.len() {
        return Err(NavError::PathExhausted);
    }
    let p = Vec2::new(pose.0, pose.1);
    let mut nearest = hint;
    let mut best = (path[hint] - p).norm();
    let mut travelled = 0.0;
    for i in hint + 1..path.len() {
        travelled += (path[i] - path[i - 1]).norm();
        if travelled > cfg.search_ahead {
            break;
        }
        let d = (path[i] - p).norm();
        if d < best {
            best = d;
            nearest = i;
        }
    }
    if nearest + 1 >= path.len() {
        return Err(NavError::PathExhausted);
    }
    let mut target = path.len() - 1;
    let mut arc = 0.0;
    for i in nearest + 1..path.len() {
        arc += (path[i] - path[i - 1]).norm();
        if arc >= cfg.lookahead - 1e-9 {
            target = i;
            break;
        }
    }
    let rel = path[target] - p;
    let dist = rel.norm();
    let eta = crate::geometry::normalize_angle(rel.y.atan2(rel.x) - pose.2);
    let curvature = if dist > 1e-9 { 2.0 * eta.sin() / dist } else { 0.0 };
    let mut v = cfg.v_ref / (1.0 + curvature.abs());
    v = v.min(cfg.v_max);
    if (v * curvature).abs() > cfg.omega_max {
        v = cfg.omega_max / curvature.abs();
    }
    Ok(PursuitOutput {
        command: VelocityCommand::new(v, v * curvature),
        nearest,
        target,
        curvature,
    })
}
