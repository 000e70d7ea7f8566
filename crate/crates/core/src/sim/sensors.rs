use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kinematics::RobotState;
use crate::nav::{CompassReading, GnssFix, Odometry};
use crate::rowctl::MaskFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Open-sky GNSS error, meters per axis.
    pub sigma_gnss_open: f64,
    /// GNSS error between crop rows, meters per axis.
    pub sigma_gnss_row: f64,
    pub sigma_compass: f64,
    /// Relative standard deviation of the wheel increments.
    pub wheel_noise: f64,
    /// Camera ticks between GNSS fixes.
    pub gnss_period: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            sigma_gnss_open: 0.07,
            sigma_gnss_row: 1.0,
            sigma_compass: 0.02,
            wheel_noise: 0.01,
            gnss_period: 3,
        }
    }
}

/// Everything the robot senses in one tick.
#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub mask: Option<MaskFrame>,
    /// Present on fix ticks only.
    pub gnss: Option<GnssFix>,
    pub compass: CompassReading,
    pub odom: Odometry,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Noise source that is a pure function of `(seed, tick)`.
pub fn tick_rng(seed: u64, tick: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tick);
    rng
}

/// GNSS, compass and odometry for the motion `prev -> cur`. `in_row`
/// selects the degraded GNSS regime.
pub fn sample_sensors(
    prev: &RobotState,
    cur: &RobotState,
    in_row: bool,
    tick: u64,
    seed: u64,
    cfg: &SensorConfig,
) -> (Option<GnssFix>, CompassReading, Odometry) {
    let mut rng = tick_rng(seed, tick);
    // the same draws happen on every tick so streams stay aligned
    let (n0, n1, n2, n3, n4) = (
        normal(&mut rng),
        normal(&mut rng),
        normal(&mut rng),
        normal(&mut rng),
        normal(&mut rng),
    );
    let sigma = if in_row { cfg.sigma_gnss_row } else { cfg.sigma_gnss_open };
    let gnss = tick.is_multiple_of(cfg.gnss_period.max(1)).then_some(GnssFix {
        x: cur.x + sigma * n0,
        y: cur.y + sigma * n1,
        sigma,
    });
    let compass = CompassReading {
        yaw: crate::geometry::normalize_angle(cur.yaw + cfg.sigma_compass * n2),
        sigma: cfg.sigma_compass,
    };
    let forward = cur.v * (cur.time - prev.time);
    let dyaw = crate::geometry::normalize_angle(cur.yaw - prev.yaw);
    let odom = Odometry {
        forward: forward * (1.0 + cfg.wheel_noise * n3),
        dyaw: dyaw * (1.0 + cfg.wheel_noise * n4),
    };
    (gnss, compass, odom)
}
