use serde::{Deserialize, Serialize};

use crate::geometry::normalize_angle;
use crate::rowctl::VelocityCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
    pub time: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            v: 0.0,
            omega: 0.0,
            time: 0.0,
        }
    }

    pub fn position(&self) -> crate::Vec2 {
        crate::Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 1.5,
        }
    }
}

/// Exact unicycle integration over `dt` with the command clamped to the
/// limits.
pub fn step_kinematics(state: &RobotState, cmd: VelocityCommand, dt: f64, limits: &VelocityLimits) -> RobotState {
    let v = cmd.v_x.clamp(-limits.v_max, limits.v_max);
    let w = cmd.omega_z.clamp(-limits.omega_max, limits.omega_max);
    let (x, y, yaw) = if w.abs() < 1e-9 {
        (
            state.x + v * dt * state.yaw.cos(),
            state.y + v * dt * state.yaw.sin(),
            state.yaw + w * dt,
        )
    } else {
        let yaw1 = state.yaw + w * dt;
        let r = v / w;
        (
            state.x + r * (yaw1.sin() - state.yaw.sin()),
            state.y - r * (yaw1.cos() - state.yaw.cos()),
            yaw1,
        )
    };
    RobotState {
        x,
        y,
        yaw: normalize_angle(yaw),
        v,
        omega: w,
        time: state.time + dt,
    }
}
