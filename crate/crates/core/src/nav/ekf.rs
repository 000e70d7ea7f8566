use nalgebra::{Matrix2, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::normalize_angle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub cov: Matrix3<f64>,
}

impl PoseEstimate {
    pub fn new(x: f64, y: f64, yaw: f64, cov: Matrix3<f64>) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            cov,
        }
    }

    pub fn position(&self) -> crate::Vec2 {
        crate::Vec2::new(self.x, self.y)
    }

    /// Smallest eigenvalue of the symmetric part of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).abs().max()
    }
}

/// Wheel increments since the previous step: arc length along the
/// heading and heading change.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    pub forward: f64,
    pub dyaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub x: f64,
    pub y: f64,
    /// Per-axis standard deviation, meters.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompassReading {
    pub yaw: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    /// Position random walk, m/√s.
    pub sigma_xy: f64,
    /// Heading random walk, rad/√s.
    pub sigma_yaw: f64,
    /// Covariance trace above which the filter waits for a GNSS fix to
    /// reinitialize.
    pub divergence_trace: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            sigma_xy: 0.02,
            sigma_yaw: 0.01,
            divergence_trace: 50.0,
        }
    }
}

fn symmetrize(p: Matrix3<f64>) -> Matrix3<f64> {
    (p + p.transpose()) * 0.5
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Moves the estimate along the odometry arc and inflates the covariance.
pub fn predict(est: &PoseEstimate, odom: Odometry, dt: f64, cfg: &EkfConfig) -> PoseEstimate {
    let heading = est.yaw + 0.5 * odom.dyaw;
    let chord = odom.forward * sinc(0.5 * odom.dyaw);
    let (s, c) = heading.sin_cos();
    let f = Matrix3::new(1.0, 0.0, -chord * s, 0.0, 1.0, chord * c, 0.0, 0.0, 1.0);
    let q = Matrix3::from_diagonal(&Vector3::new(
        cfg.sigma_xy * cfg.sigma_xy * dt,
        cfg.sigma_xy * cfg.sigma_xy * dt,
        cfg.sigma_yaw * cfg.sigma_yaw * dt,
    ));
    PoseEstimate {
        x: est.x + chord * c,
        y: est.y + chord * s,
        yaw: normalize_angle(est.yaw + odom.dyaw),
        cov: symmetrize(f * est.cov * f.transpose() + q),
    }
}

/// GNSS position update. Returns the input unchanged if the innovation
/// covariance is singular.
pub fn update_gnss(est: &PoseEstimate, fix: GnssFix) -> PoseEstimate {
    let h = nalgebra::Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let r = Matrix2::identity() * (fix.sigma * fix.sigma);
    let s = h * est.cov * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        return *est;
    };
    let k = est.cov * h.transpose() * s_inv;
    let innov = Vector2::new(fix.x - est.x, fix.y - est.y);
    let dx = k * innov;
    let ikh = Matrix3::identity() - k * h;
    PoseEstimate {
        x: est.x + dx[0],
        y: est.y + dx[1],
        yaw: normalize_angle(est.yaw + dx[2]),
        cov: symmetrize(ikh * est.cov * ikh.transpose() + k * r * k.transpose()),
    }
}

pub fn update_compass(est: &PoseEstimate, reading: CompassReading) -> PoseEstimate {
    let h = RowVector3::new(0.0, 0.0, 1.0);
    let r = reading.sigma * reading.sigma;
    let s = (h * est.cov * h.transpose())[0] + r;
    if s <= 0.0 || !s.is_finite() {
        return *est;
    }
    let k = est.cov * h.transpose() / s;
    let innov = normalize_angle(reading.yaw - est.yaw);
    let dx = k * innov;
    let ikh = Matrix3::identity() - k * h;
    PoseEstimate {
        x: est.x + dx[0],
        y: est.y + dx[1],
        yaw: normalize_angle(est.yaw + dx[2]),
        cov: symmetrize(ikh * est.cov * ikh.transpose() + k * k.transpose() * r),
    }
}

/// One filter step without the divergence guard.
pub fn ekf_step(
    est: &PoseEstimate,
    odom: Odometry,
    gnss: Option<GnssFix>,
    compass: Option<CompassReading>,
    dt: f64,
    cfg: &EkfConfig,
) -> PoseEstimate {
    let mut e = predict(est, odom, dt, cfg);
    if let Some(fix) = gnss {
        e = update_gnss(&e, fix);
    }
    if let Some(c) = compass {
        e = update_compass(&e, c);
    }
    e
}

/// Filter with the divergence guard and its event log.
#[derive(Debug, Clone)]
pub struct Ekf {
    pub cfg: EkfConfig,
    pub estimate: PoseEstimate,
    diverged: bool,
    /// Step indices at which the filter was reinitialized.
    pub reinit_steps: Vec<u64>,
    steps: u64,
}

impl Ekf {
    pub fn new(initial: PoseEstimate, cfg: EkfConfig) -> Self {
        Self {
            cfg,
            estimate: initial,
            diverged: false,
            reinit_steps: Vec::new(),
            steps: 0,
        }
    }

    pub fn step(
        &mut self,
        odom: Odometry,
        gnss: Option<GnssFix>,
        compass: Option<CompassReading>,
        dt: f64,
    ) -> &PoseEstimate {
        self.steps += 1;
        if self.diverged {
            if let Some(fix) = gnss {
                let predicted = predict(&self.estimate, odom, dt, &self.cfg);
                let yaw_var = predicted.cov[(2, 2)].min(1.0);
                let v = fix.sigma * fix.sigma;
                self.estimate = PoseEstimate::new(
                    fix.x,
                    fix.y,
                    predicted.yaw,
                    Matrix3::from_diagonal(&Vector3::new(v, v, yaw_var)),
                );
                if let Some(c) = compass {
                    self.estimate = update_compass(&self.estimate, c);
                }
                self.diverged = false;
                self.reinit_steps.push(self.steps);
                return &self.estimate;
            }
        }
        self.estimate = ekf_step(&self.estimate, odom, gnss, compass, dt, &self.cfg);
        if self.estimate.cov.trace() > self.cfg.divergence_trace || !self.estimate.cov.iter().all(|v| v.is_finite()) {
            self.diverged = true;
        }
        &self.estimate
    }
}
