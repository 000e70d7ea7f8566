use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rowpilot_core::field::{FieldRanges, FieldSpec};
use rowpilot_core::nav::{Policy, PursuitConfig, SupervisorConfig};
use rowpilot_core::planner::PlannerConfig;
use rowpilot_core::rowctl::RowControlConfig;
use rowpilot_core::sim::{NavConfig, SensorConfig, SimConfig, VelocityLimits};
use rowpilot_core::waymap::MapNoise;

/// Where the field comes from when no spec file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// 2.5 to 3.2 m corridors, dense plants.
    Vineyard,
    /// The full generator range, 2 to 30 corridors.
    Wide,
}

/// Flat `key = value` run configuration. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub seed: u64,
    pub policy: Policy,
    /// TOML file holding a field spec; overrides `field_family`.
    pub field_spec: Option<PathBuf>,
    pub field_family: FieldFamily,
    #[serde(skip)]
    pub out: PathBuf,

    // waypoint map
    pub k: usize,
    pub c_thr: f64,
    /// Pixels.
    pub d_thr: f64,
    pub map_confidence_sigma: f64,
    pub map_offset_sigma: f64,
    pub map_spurious_rate: f64,
    pub map_dropout_rate: f64,

    // planner, pixels unless noted
    pub d_er: f64,
    pub d_safe: f64,
    /// Meters.
    pub path_step: f64,
    /// Meters.
    pub robot_diameter: f64,

    // row controller
    pub s: usize,
    /// Meters.
    pub d_depth: f64,
    pub noise_fraction: f64,
    pub anomaly_fraction: f64,
    pub omega_gain: f64,
    pub v_max: f64,
    pub alpha_ema: f64,

    // supervisor and path following, meters
    pub waypoint_th: f64,
    pub lookahead: f64,
    pub v_ref: f64,

    // simulator
    pub dt: f64,
    pub robot_v_max: f64,
    pub robot_omega_max: f64,
    pub robot_radius: f64,
    pub sigma_gnss_open: f64,
    pub sigma_gnss_row: f64,
    pub sigma_compass: f64,
    pub wheel_noise: f64,
    pub gnss_period: u64,
    /// Seconds; derived from the path length when absent.
    pub max_time: Option<f64>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        let rowctl = RowControlConfig::default();
        let sup = SupervisorConfig::default();
        let pursuit = PursuitConfig::default();
        let planner = PlannerConfig::default();
        let sim = SimConfig::default();
        Self {
            seed: 0,
            policy: Policy::Hybrid,
            field_spec: None,
            field_family: FieldFamily::Vineyard,
            out: PathBuf::from("out"),
            k: 8,
            c_thr: 0.9,
            d_thr: 8.0,
            map_confidence_sigma: 0.0,
            map_offset_sigma: 0.0,
            map_spurious_rate: 0.0,
            map_dropout_rate: 0.0,
            d_er: planner.end_row_distance,
            d_safe: planner.safety_margin,
            path_step: planner.step,
            robot_diameter: planner.robot_diameter,
            s: rowctl.s,
            d_depth: rowctl.d_depth,
            noise_fraction: rowctl.noise_fraction,
            anomaly_fraction: rowctl.anomaly_fraction,
            omega_gain: rowctl.omega_gain,
            v_max: rowctl.v_max,
            alpha_ema: rowctl.alpha_ema,
            waypoint_th: sup.waypoint_th,
            lookahead: pursuit.lookahead,
            v_ref: pursuit.v_ref,
            dt: sim.dt,
            robot_v_max: sim.limits.v_max,
            robot_omega_max: sim.limits.omega_max,
            robot_radius: sim.robot_radius,
            sigma_gnss_open: sim.sensors.sigma_gnss_open,
            sigma_gnss_row: sim.sensors.sigma_gnss_row,
            sigma_compass: sim.sensors.sigma_compass,
            wheel_noise: sim.sensors.wheel_noise,
            gnss_period: sim.sensors.gnss_period,
            max_time: None,
        }
    }
}

/// Everything a run depends on, with the field spec resolved. Hashed
/// into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConfig {
    #[serde(flatten)]
    pub mission: MissionConfig,
    pub field: FieldSpec,
}

impl EffectiveConfig {
    /// The spec file location is left out; its contents are in `field`.
    pub fn hash(&self) -> String {
        let mut bare = self.clone();
        bare.mission.field_spec = None;
        let json = serde_json::to_vec(&bare).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn check(ok: bool, key: &str, range: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("{key} must be {range}"))
    }
}

impl MissionConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // spec paths are relative to the config file
        if let Some(spec) = &cfg.field_spec {
            if spec.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.field_spec = Some(dir.join(spec));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        check((1..=64).contains(&self.k), "k", "in 1..=64")?;
        check(self.c_thr > 0.0 && self.c_thr <= 1.0, "c_thr", "in (0, 1]")?;
        check(self.d_thr > 0.0 && self.d_thr.is_finite(), "d_thr", "positive")?;
        check(self.map_confidence_sigma >= 0.0, "map_confidence_sigma", "non-negative")?;
        check(self.map_offset_sigma >= 0.0, "map_offset_sigma", "non-negative")?;
        check(unit(self.map_spurious_rate), "map_spurious_rate", "in [0, 1]")?;
        check(unit(self.map_dropout_rate), "map_dropout_rate", "in [0, 1]")?;
        check(self.d_er > 0.0 && self.d_er <= 200.0, "d_er", "in (0, 200] px")?;
        check((0.0..=50.0).contains(&self.d_safe), "d_safe", "in [0, 50] px")?;
        check(self.path_step > 0.0 && self.path_step <= 1.0, "path_step", "in (0, 1] m")?;
        check(self.robot_diameter > 0.0 && self.robot_diameter < 5.0, "robot_diameter", "in (0, 5) m")?;
        check(self.s <= 30, "s", "at most 30")?;
        check(self.d_depth > 0.0 && self.d_depth <= 10.0, "d_depth", "in (0, 10] m")?;
        check((0.0..1.0).contains(&self.noise_fraction), "noise_fraction", "in [0, 1)")?;
        check(self.anomaly_fraction > 0.0 && self.anomaly_fraction <= 1.0, "anomaly_fraction", "in (0, 1]")?;
        check(self.omega_gain > 0.0 && self.omega_gain <= 1.0, "omega_gain", "in (0, 1]")?;
        check(self.v_max > 0.0 && self.v_max <= 5.0, "v_max", "in (0, 5] m/s")?;
        check(self.alpha_ema > 0.0 && self.alpha_ema <= 1.0, "alpha_ema", "in (0, 1]")?;
        check(self.waypoint_th > 0.0 && self.waypoint_th <= 5.0, "waypoint_th", "in (0, 5] m")?;
        check(self.lookahead > 0.0 && self.lookahead <= 10.0, "lookahead", "in (0, 10] m")?;
        check(self.v_ref > 0.0 && self.v_ref <= 5.0, "v_ref", "in (0, 5] m/s")?;
        check(self.dt > 0.0 && self.dt <= 1.0, "dt", "in (0, 1] s")?;
        check(self.robot_v_max > 0.0 && self.robot_v_max <= 5.0, "robot_v_max", "in (0, 5] m/s")?;
        check(self.robot_omega_max > 0.0 && self.robot_omega_max <= 10.0, "robot_omega_max", "in (0, 10] rad/s")?;
        check((0.0..2.0).contains(&self.robot_radius), "robot_radius", "in [0, 2) m")?;
        check(self.sigma_gnss_open >= 0.0, "sigma_gnss_open", "non-negative")?;
        check(self.sigma_gnss_row >= 0.0, "sigma_gnss_row", "non-negative")?;
        check(self.sigma_compass >= 0.0, "sigma_compass", "non-negative")?;
        check(self.wheel_noise >= 0.0 && self.wheel_noise < 1.0, "wheel_noise", "in [0, 1)")?;
        check(self.gnss_period >= 1, "gnss_period", "at least 1")?;
        if let Some(t) = self.max_time {
            check(t > 0.0 && t.is_finite(), "max_time", "positive")?;
        }
        if let Some(p) = &self.field_spec {
            check(p.is_file(), "field_spec", &format!("an existing file ({})", p.display()))?;
        }
        Ok(())
    }

    /// Field for this run: the spec file, or a sample from the family.
    pub fn field(&self) -> Result<FieldSpec, String> {
        let spec = match &self.field_spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => match self.field_family {
                FieldFamily::Vineyard => FieldRanges::vineyard().sample(self.seed),
                FieldFamily::Wide => FieldRanges::default().sample(self.seed),
            },
        };
        spec.validate().map_err(|e| format!("field: {e}"))?;
        if spec.grid_width % self.k != 0 || spec.grid_height % self.k != 0 {
            return Err(format!(
                "field grid {}x{} is not divisible by k = {}",
                spec.grid_width, spec.grid_height, self.k
            ));
        }
        Ok(spec)
    }

    pub fn resolve(&self) -> Result<EffectiveConfig, String> {
        self.validate()?;
        Ok(EffectiveConfig {
            field: self.field()?,
            mission: self.clone(),
        })
    }

    pub fn map_noise(&self) -> MapNoise {
        MapNoise {
            confidence_sigma: self.map_confidence_sigma,
            offset_sigma: self.map_offset_sigma,
            spurious_rate: self.map_spurious_rate,
            dropout_rate: self.map_dropout_rate,
            ..MapNoise::default()
        }
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            end_row_distance: self.d_er,
            safety_margin: self.d_safe,
            step: self.path_step,
            robot_diameter: self.robot_diameter,
            ..PlannerConfig::default()
        }
    }

    pub fn sim(&self, seed: u64) -> SimConfig {
        SimConfig {
            dt: self.dt,
            sensors: SensorConfig {
                sigma_gnss_open: self.sigma_gnss_open,
                sigma_gnss_row: self.sigma_gnss_row,
                sigma_compass: self.sigma_compass,
                wheel_noise: self.wheel_noise,
                gnss_period: self.gnss_period,
            },
            limits: VelocityLimits {
                v_max: self.robot_v_max,
                omega_max: self.robot_omega_max,
            },
            robot_radius: self.robot_radius,
            max_time: self.max_time,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn nav(&self) -> NavConfig {
        let d = NavConfig::default();
        NavConfig {
            supervisor: SupervisorConfig {
                waypoint_th: self.waypoint_th,
                ..d.supervisor
            },
            rowctl: RowControlConfig {
                s: self.s,
                d_depth: self.d_depth,
                noise_fraction: self.noise_fraction,
                anomaly_fraction: self.anomaly_fraction,
                omega_gain: self.omega_gain,
                v_max: self.v_max,
                alpha_ema: self.alpha_ema,
            },
            pursuit: PursuitConfig {
                lookahead: self.lookahead,
                v_ref: self.v_ref,
                ..d.pursuit
            },
            ..d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_map_through() {
        let cfg = MissionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.nav(), NavConfig::default());
        assert_eq!(cfg.planner(), PlannerConfig::default());
        assert_eq!(cfg.sim(0), SimConfig::default());
    }

    #[test]
    fn flat_file_parses_and_rejects_unknown_keys() {
        let cfg: MissionConfig = toml::from_str("seed = 3\npolicy = \"gnss_only\"\nc_thr = 0.8\nmax_time = 90.0\n").unwrap();
        assert_eq!((cfg.seed, cfg.policy, cfg.c_thr, cfg.max_time), (3, Policy::GnssOnly, 0.8, Some(90.0)));
        assert!(toml::from_str::<MissionConfig>("c_threshold = 0.8\n").is_err());
    }

    #[test]
    fn out_of_range_values_are_named() {
        let cfg = MissionConfig {
            alpha_ema: 0.0,
            ..MissionConfig::default()
        };
        assert!(cfg.validate().unwrap_err().contains("alpha_ema"));
        let cfg = MissionConfig {
            field_spec: Some(PathBuf::from("/nonexistent/field.toml")),
            ..MissionConfig::default()
        };
        assert!(cfg.validate().unwrap_err().contains("field_spec"));
    }

    #[test]
    fn hash_tracks_effective_values_only() {
        let a = MissionConfig::default().resolve().unwrap();
        let moved = MissionConfig {
            out: PathBuf::from("elsewhere"),
            ..MissionConfig::default()
        };
        assert_eq!(a.hash(), moved.resolve().unwrap().hash());
        let other = MissionConfig {
            seed: 1,
            ..MissionConfig::default()
        };
        assert_ne!(a.hash(), other.resolve().unwrap().hash());
    }
}
