//! Pose estimation and the local policy that switches between the path
//! follower and the row controller.

mod ekf;
mod pursuit;
mod supervisor;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::planner::{GlobalPath, SegmentTag};
use crate::rowctl::{ControlTrace, GapResult, MaskFrame, RowControlConfig, RowController, VelocityCommand};

pub use ekf::{
    ekf_step, predict, update_compass, update_gnss, CompassReading, Ekf, EkfConfig, GnssFix, Odometry,
    PoseEstimate,
};
pub use pursuit::{pure_pursuit_command, PursuitConfig, PursuitOutput};
pub use supervisor::{write_mode_log, Mode, ModeEvent, Supervisor, SupervisorConfig, Trigger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NavError {
    #[error("no path left ahead of the robot")]
    PathExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Path following everywhere.
    GnssOnly,
    /// Row controller inside corridors, path following on turns.
    Hybrid,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::GnssOnly => "gnss_only",
            Policy::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gnss_only" => Ok(Policy::GnssOnly),
            "hybrid" => Ok(Policy::Hybrid),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    RowFollowing,
    PurePursuit,
    Stopped,
}

/// Result of one navigation tick.
#[derive(Debug, Clone)]
pub struct NavOutput {
    pub command: VelocityCommand,
    pub event: Option<ModeEvent>,
    pub controller: Controller,
    pub trace: Option<ControlTrace>,
}

/// Supervisor plus both controllers, driven once per camera frame.
#[derive(Debug, Clone)]
pub struct Navigator {
    pub policy: Policy,
    pub supervisor: Supervisor,
    pub rowctl: RowController,
    pub pursuit: PursuitConfig,
    path: Vec<Vec2>,
    run_starts: HashMap<SegmentTag, usize>,
    hint: usize,
}

impl Navigator {
    pub fn new(
        policy: Policy,
        path: &GlobalPath,
        waypoints: Vec<Vec2>,
        supervisor: SupervisorConfig,
        rowctl: RowControlConfig,
        pursuit: PursuitConfig,
    ) -> Self {
        let mut run_starts = HashMap::new();
        for (tag, range) in path.runs() {
            run_starts.entry(tag).or_insert(range.start);
        }
        Self {
            policy,
            supervisor: Supervisor::new(waypoints, supervisor),
            rowctl: RowController::new(rowctl),
            pursuit,
            path: path.points.clone(),
            run_starts,
            hint: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.supervisor.mode()
    }

    fn follow_path(&mut self, est: &PoseEstimate) -> (VelocityCommand, Controller) {
        match pure_pursuit_command((est.x, est.y, est.yaw), &self.path, self.hint, &self.pursuit) {
            Ok(out) => {
                self.hint = self.hint.max(out.nearest);
                (out.command, Controller::PurePursuit)
            }
            Err(NavError::PathExhausted) => (VelocityCommand::STOP, Controller::Stopped),
        }
    }

    fn on_event(&mut self, ev: &ModeEvent) {
        self.rowctl.reset_ema();
        let rank = ev.index / 2;
        let tag = match ev.new {
            Mode::FollowRow => Some(SegmentTag::IntraRow(rank)),
            Mode::Turn => Some(SegmentTag::Turn(rank)),
            Mode::Done => None,
        };
        if let Some(start) = tag.and_then(|t| self.run_starts.get(&t)) {
            self.hint = self.hint.max(*start);
        }
    }

    /// `frame` is required under the hybrid policy.
    pub fn step(&mut self, est: &PoseEstimate, frame: Option<MaskFrame>, t: f64) -> NavOutput {
        let mut event = self.supervisor.update(est.position(), t);
        if let Some(ev) = event {
            self.on_event(&ev);
        }
        let (command, controller, trace) = match (self.mode(), self.policy) {
            (Mode::Done, _) => {
                if let Some(f) = frame {
                    self.rowctl.push(f);
                }
                (VelocityCommand::STOP, Controller::Stopped, None)
            }
            (Mode::FollowRow, Policy::Hybrid) => {
                let f = frame.expect("hybrid policy needs camera frames");
                let trace = self.rowctl.step(f);
                if event.is_none() && matches!(trace.gap, GapResult::Anomaly { .. }) {
                    // the turn starts next tick; this one still stops
                    event = self.supervisor.row_end_anomaly(est.position(), t);
                    if let Some(ev) = event {
                        self.on_event(&ev);
                    }
                }
                (trace.smoothed, Controller::RowFollowing, Some(trace))
            }
            _ => {
                if let Some(f) = frame {
                    self.rowctl.push(f);
                }
                let (c, k) = self.follow_path(est);
                (c, k, None)
            }
        };
        NavOutput {
            command,
            event,
            controller,
            trace,
        }
    }
}
