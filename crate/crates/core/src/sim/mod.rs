//! Deterministic 2D mission simulator: unicycle robot, rendered plant
//! masks, GNSS with canopy degradation, compass and wheel odometry.

mod kinematics;
mod render;
mod sensors;

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::field::FieldWorld;
use crate::geometry::Vec2;
use crate::nav::{Controller, Ekf, EkfConfig, Mode, ModeEvent, Navigator, Policy, PoseEstimate, PursuitConfig, SupervisorConfig};
use crate::planner::{GlobalPath, OrderedWaypoints};
use crate::rowctl::RowControlConfig;

pub use kinematics::{step_kinematics, RobotState, VelocityLimits};
pub use render::{ray_circle, render_mask, CameraConfig, PlantIndex};
pub use sensors::{sample_sensors, tick_rng, SensorConfig, SensorFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Control period, seconds.
    pub dt: f64,
    pub camera: CameraConfig,
    pub sensors: SensorConfig,
    pub limits: VelocityLimits,
    /// Robot footprint radius; a plant closer than this is a collision.
    pub robot_radius: f64,
    /// Seconds; derived from the path length when absent.
    pub max_time: Option<f64>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 30.0,
            camera: CameraConfig::default(),
            sensors: SensorConfig::default(),
            limits: VelocityLimits::default(),
            robot_radius: 0.25,
            max_time: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavConfig {
    pub supervisor: SupervisorConfig,
    pub rowctl: RowControlConfig,
    pub pursuit: PursuitConfig,
    pub ekf: EkfConfig,
    pub initial_sigma_xy: f64,
    pub initial_sigma_yaw: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            supervisor: SupervisorConfig::default(),
            rowctl: RowControlConfig::default(),
            pursuit: PursuitConfig::default(),
            ekf: EkfConfig::default(),
            initial_sigma_xy: 0.05,
            initial_sigma_yaw: 0.02,
        }
    }
}

/// Field geometry prepared for rendering and clearance queries.
#[derive(Debug, Clone)]
pub struct SimWorld<'a> {
    pub field: &'a FieldWorld,
    pub plants: PlantIndex,
}

impl<'a> SimWorld<'a> {
    pub fn new(field: &'a FieldWorld) -> Self {
        Self {
            field,
            plants: PlantIndex::new(&field.plants, 1.0),
        }
    }

    /// Mask (when requested) and the other sensors for the motion
    /// `prev -> cur` at `tick`.
    pub fn render_frame(
        &self,
        prev: &RobotState,
        cur: &RobotState,
        tick: u64,
        cfg: &SimConfig,
        with_mask: bool,
    ) -> SensorFrame {
        let in_row = self.field.corridor_at(cur.position()).is_some();
        let (gnss, compass, odom) = sample_sensors(prev, cur, in_row, tick, cfg.seed, &cfg.sensors);
        let mask = with_mask.then(|| render_mask(&self.plants, (cur.x, cur.y, cur.yaw), &cfg.camera, cur.time));
        SensorFrame {
            mask,
            gnss,
            compass,
            odom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_yaw: f64,
    pub v: f64,
    pub omega: f64,
    /// Mode in effect while this motion was commanded.
    pub mode: Mode,
    pub controller: Controller,
    /// Distance from the robot center to the nearest plant surface.
    pub clearance: f64,
    pub cov_trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Collision { tick: u64, x: f64, y: f64, yaw: f64 },
    Timeout { tick: u64, x: f64, y: f64, yaw: f64 },
}

#[derive(Debug, Clone)]
pub struct MissionResult {
    pub policy: Policy,
    pub outcome: Outcome,
    pub samples: Vec<TrajectorySample>,
    pub events: Vec<ModeEvent>,
    pub ticks: u64,
    pub min_clearance: f64,
    pub ekf_reinits: Vec<u64>,
    /// Smallest covariance eigenvalue seen over the mission.
    pub min_cov_eigenvalue: f64,
    pub max_cov_asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub policy: Policy,
    pub seed: u64,
    pub outcome: Outcome,
    pub ticks: u64,
    pub duration: f64,
    pub min_clearance: f64,
    pub mode_trace: Vec<Mode>,
    pub missed_waypoints: usize,
    pub ekf_reinits: usize,
    pub covariance_spd: bool,
}

impl MissionResult {
    pub fn completed(&self) -> bool {
        self.outcome == Outcome::Completed
    }

    pub fn mode_trace(&self) -> Vec<Mode> {
        self.events.iter().map(|e| e.new).collect()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn covariance_spd(&self) -> bool {
        self.min_cov_eigenvalue > -1e-9 && self.max_cov_asymmetry <= 1e-12
    }

    pub fn true_positions(&self) -> Vec<Vec2> {
        self.samples.iter().map(|s| Vec2::new(s.x, s.y)).collect()
    }

    pub fn summary(&self, seed: u64) -> MissionSummary {
        MissionSummary {
            policy: self.policy,
            seed,
            outcome: self.outcome,
            ticks: self.ticks,
            duration: self.duration(),
            min_clearance: self.min_clearance,
            mode_trace: self.mode_trace(),
            missed_waypoints: self.events.iter().filter(|e| e.missed()).count(),
            ekf_reinits: self.ekf_reinits.len(),
            covariance_spd: self.covariance_spd(),
        }
    }

    /// One row per sample, every field of [`TrajectorySample`].
    pub fn write_trajectory_csv(&self, path: &Path) -> Result<(), IoError> {
        write_trajectory_csv(&self.samples, path)
    }
}

pub fn write_trajectory_csv(samples: &[TrajectorySample], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_trajectory_csv`]; floats round-trip exactly.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectorySample>, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Optional per-tick controller dumps.
#[derive(Debug, Clone, Default)]
pub struct DebugDump {
    pub dir: Option<PathBuf>,
    pub every: u64,
}

/// Flies the mission. Waypoints and path come from the planner (pixels
/// and meters respectively).
pub fn run_mission(
    world: &SimWorld<'_>,
    path: &GlobalPath,
    ordered: &OrderedWaypoints,
    policy: Policy,
    sim: &SimConfig,
    nav: &NavConfig,
    debug: &DebugDump,
) -> MissionResult {
    let res = world.field.spec.resolution;
    let waypoints: Vec<Vec2> = ordered.positions().iter().map(|p| p * res).collect();
    let heading = waypoints[1] - waypoints[0];
    let mut state = RobotState::at(waypoints[0].x, waypoints[0].y, heading.y.atan2(heading.x));
    let p0 = Matrix3::from_diagonal(&Vector3::new(
        nav.initial_sigma_xy.powi(2),
        nav.initial_sigma_xy.powi(2),
        nav.initial_sigma_yaw.powi(2),
    ));
    let mut ekf = Ekf::new(PoseEstimate::new(state.x, state.y, state.yaw, p0), nav.ekf.clone());
    let mut navigator = Navigator::new(
        policy,
        path,
        waypoints,
        nav.supervisor.clone(),
        nav.rowctl.clone(),
        PursuitConfig {
            v_max: nav.pursuit.v_max.min(sim.limits.v_max),
            omega_max: nav.pursuit.omega_max.min(sim.limits.omega_max),
            ..nav.pursuit.clone()
        },
    );
    let max_time = sim.max_time.unwrap_or(path.length() / 0.15 + 60.0);
    let with_mask = policy == Policy::Hybrid;

    let mut samples = Vec::new();
    let mut min_clearance = f64::INFINITY;
    let (mut min_eig, mut max_asym) = (f64::INFINITY, 0.0f64);
    let mut frame = world.render_frame(&state, &state, 0, sim, with_mask);
    let mut tick = 0u64;
    let outcome = loop {
        let out = navigator.step(&ekf.estimate, frame.mask.take(), state.time);
        if let (Some(dir), Some(trace)) = (&debug.dir, &out.trace) {
            if debug.every > 0 && tick.is_multiple_of(debug.every) {
                // dumps are best effort; a full disk must not abort the mission
                let _ = trace.dump(dir, &format!("tick_{tick:06}"));
            }
        }
        if navigator.mode() == Mode::Done {
            break Outcome::Completed;
        }
        let mode = navigator.mode();
        let next = step_kinematics(&state, out.command, sim.dt, &sim.limits);
        tick += 1;
        frame = world.render_frame(&state, &next, tick, sim, with_mask);
        state = next;
        let est = *ekf.step(frame.odom, frame.gnss, Some(frame.compass), sim.dt);
        min_eig = min_eig.min(est.min_eigenvalue());
        max_asym = max_asym.max(est.asymmetry());
        let clearance = world.plants.clearance(state.position(), 5.0);
        min_clearance = min_clearance.min(clearance);
        samples.push(TrajectorySample {
            t: state.time,
            x: state.x,
            y: state.y,
            yaw: state.yaw,
            est_x: est.x,
            est_y: est.y,
            est_yaw: est.yaw,
            v: state.v,
            omega: state.omega,
            mode,
            controller: out.controller,
            clearance,
            cov_trace: est.cov.trace(),
        });
        if clearance <= sim.robot_radius {
            break Outcome::Collision {
                tick,
                x: state.x,
                y: state.y,
                yaw: state.yaw,
            };
        }
        if state.time > max_time {
            break Outcome::Timeout {
                tick,
                x: state.x,
                y: state.y,
                yaw: state.yaw,
            };
        }
    };
    MissionResult {
        policy,
        outcome,
        samples,
        events: navigator.supervisor.events.clone(),
        ticks: tick,
        min_clearance,
        ekf_reinits: ekf.reinit_steps.clone(),
        min_cov_eigenvalue: min_eig,
        max_cov_asymmetry: max_asym,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_field, FieldSpec};
    use crate::planner::{plan, PlannerConfig};

    fn setup(n_rows: usize) -> (FieldWorld, crate::planner::Plan) {
        let spec = FieldSpec {
            n_rows,
            row_length: 10.0,
            grid_width: 240,
            grid_height: 240,
            ..FieldSpec::default()
        };
        let world = generate_field(&spec).unwrap();
        let wps: Vec<Vec2> = world.ground_truth_waypoints().iter().map(|w| w.position).collect();
        let p = plan(&world.occupancy, &wps, &PlannerConfig::default()).unwrap();
        (world, p)
    }

    fn noiseless() -> SimConfig {
        SimConfig {
            sensors: SensorConfig {
                sigma_gnss_open: 1e-6,
                sigma_gnss_row: 1e-6,
                sigma_compass: 1e-6,
                wheel_noise: 0.0,
                ..SensorConfig::default()
            },
            ..SimConfig::default()
        }
    }

    #[test]
    fn gnss_only_smoke() {
        let (world, p) = setup(3);
        let sw = SimWorld::new(&world);
        let r = run_mission(&sw, &p.path, &p.ordered, Policy::GnssOnly, &noiseless(), &NavConfig::default(), &DebugDump::default());
        assert!(r.completed(), "{:?}", r.outcome);
        assert_eq!(r.mode_trace(), vec![Mode::FollowRow, Mode::Turn, Mode::FollowRow, Mode::Done]);
        assert!(r.samples.iter().all(|s| s.controller != Controller::RowFollowing));
        assert!(r.covariance_spd());
    }

    #[test]
    fn hybrid_mode_contract_and_determinism() {
        let (world, p) = setup(4);
        let sw = SimWorld::new(&world);
        let cfg = SimConfig {
            seed: 11,
            ..SimConfig::default()
        };
        let a = run_mission(&sw, &p.path, &p.ordered, Policy::Hybrid, &cfg, &NavConfig::default(), &DebugDump::default());
        assert!(a.completed(), "{:?}", a.outcome);
        assert_eq!(
            a.mode_trace(),
            vec![Mode::FollowRow, Mode::Turn, Mode::FollowRow, Mode::Turn, Mode::FollowRow, Mode::Done]
        );
        for s in &a.samples {
            assert_eq!(s.mode == Mode::FollowRow, s.controller == Controller::RowFollowing);
        }
        let b = run_mission(&sw, &p.path, &p.ordered, Policy::Hybrid, &cfg, &NavConfig::default(), &DebugDump::default());
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let (world, p) = setup(3);
        let sw = SimWorld::new(&world);
        let r = run_mission(&sw, &p.path, &p.ordered, Policy::GnssOnly, &noiseless(), &NavConfig::default(), &DebugDump::default());
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("trajectory.csv");
        r.write_trajectory_csv(&file).unwrap();
        assert_eq!(read_trajectory_csv(&file).unwrap(), r.samples);
    }
}
