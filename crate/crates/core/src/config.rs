//! Simulation configuration.
//!
//! Everything is loadable from a single TOML file with optional sections
//! `[world]`, `[controller]` and `[orchestrator]`; missing keys keep their
//! defaults. Example:
//!
//! ```toml
//! seed = 7
//!
//! [world]
//! dt = 0.1
//! v_max = 0.15
//!
//! [controller]
//! pos_tol = 0.05
//! ang_tol = 0.0349
//!
//! [orchestrator]
//! default_team_size = 4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::InteractionMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

/// Axis-aligned arena bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Arena {
    /// A `width` x `height` arena centered on the origin.
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            min_x: -width / 2.0,
            min_y: -height / 2.0,
            max_x: width / 2.0,
            max_y: height / 2.0,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Clamps a disc center so the whole disc stays inside the arena.
    pub fn clamp_disc(&self, x: f64, y: f64, radius: f64) -> (f64, f64) {
        let cx = x.clamp(
            self.min_x + radius,
            (self.max_x - radius).max(self.min_x + radius),
        );
        let cy = y.clamp(
            self.min_y + radius,
            (self.max_y - radius).max(self.min_y + radius),
        );
        (cx, cy)
    }
}

impl Default for Arena {
    fn default() -> Self {
        Self::centered(4.0, 4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Fixed integration step, seconds.
    pub dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub robot_radius: f64,
    pub object_radius: f64,
    pub arena: Arena,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 0.15,
            omega_max: 1.5,
            robot_radius: 0.085,
            object_radius: 0.15,
            arena: Arena::default(),
        }
    }
}

/// Thresholds and speeds of the transport controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    /// Free space between robot and object surfaces at a deployment slot.
    pub deploy_clearance: f64,
    pub contact_tol: f64,
    pub slot_tol: f64,
    pub pos_tol: f64,
    /// Radians.
    pub ang_tol: f64,
    pub formation_tol: f64,
    pub push_speed: f64,
    /// Radians per second.
    pub orbit_speed: f64,
    pub front_gap: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            deploy_clearance: 0.05,
            contact_tol: 0.01,
            slot_tol: 0.03,
            pos_tol: 0.05,
            ang_tol: 2f64.to_radians(),
            formation_tol: 0.08,
            push_speed: 0.04,
            orbit_speed: 0.06,
            front_gap: 0.02,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self, world: &WorldConfig) -> Result<(), ConfigError> {
        let named = [
            ("deploy_clearance", self.deploy_clearance),
            ("contact_tol", self.contact_tol),
            ("slot_tol", self.slot_tol),
            ("pos_tol", self.pos_tol),
            ("ang_tol", self.ang_tol),
            ("formation_tol", self.formation_tol),
            ("push_speed", self.push_speed),
            ("orbit_speed", self.orbit_speed),
            ("front_gap", self.front_gap),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "controller.{name} must be positive, got {value}"
                )));
            }
        }
        let deploy_radius = world.object_radius + world.robot_radius + self.deploy_clearance;
        if self.pos_tol >= deploy_radius {
            return Err(ConfigError::Invalid(format!(
                "controller.pos_tol ({}) must be below the deployment radius ({deploy_radius})",
                self.pos_tol
            )));
        }
        if self.ang_tol >= std::f64::consts::FRAC_PI_2 {
            return Err(ConfigError::Invalid(
                "controller.ang_tol must be below pi/2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    pub default_team_size: usize,
    /// Open relocation orders are dropped after this many seconds.
    pub relocation_timeout: f64,
    pub mode: InteractionMode,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            default_team_size: 4,
            relocation_timeout: 60.0,
            mode: InteractionMode::Combined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub controller: ControllerParams,
    pub orchestrator: OrchestratorConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        for (name, value) in [
            ("dt", w.dt),
            ("v_max", w.v_max),
            ("omega_max", w.omega_max),
            ("robot_radius", w.robot_radius),
            ("object_radius", w.object_radius),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "world.{name} must be positive, got {value}"
                )));
            }
        }
        if w.object_radius <= w.robot_radius {
            return Err(ConfigError::Invalid(
                "world.object_radius must exceed world.robot_radius".into(),
            ));
        }
        if w.arena.max_x <= w.arena.min_x || w.arena.max_y <= w.arena.min_y {
            return Err(ConfigError::Invalid("world.arena is empty".into()));
        }
        if self.orchestrator.default_team_size == 0 {
            return Err(ConfigError::Invalid(
                "orchestrator.default_team_size must be at least 1".into(),
            ));
        }
        if self.orchestrator.relocation_timeout.is_nan()
            || self.orchestrator.relocation_timeout <= 0.0
        {
            return Err(ConfigError::Invalid(
                "orchestrator.relocation_timeout must be positive".into(),
            ));
        }
        self.controller.validate(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = SimConfig::from_toml_str(
            r#"
            seed = 3
            [world]
            dt = 0.05
            [controller]
            pos_tol = 0.04
            [orchestrator]
            mode = "robot_only"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.world.dt, 0.05);
        assert_eq!(cfg.world.v_max, 0.15);
        assert_eq!(cfg.controller.pos_tol, 0.04);
        assert_eq!(cfg.controller.slot_tol, 0.03);
        assert_eq!(cfg.orchestrator.mode, InteractionMode::RobotOnly);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(SimConfig::from_toml_str("[world]\nspeed = 1.0\n").is_err());
        assert!(SimConfig::from_toml_str("[world]\ndt = -0.1\n").is_err());
        assert!(SimConfig::from_toml_str("[world]\nobject_radius = 0.05\n").is_err());
        assert!(SimConfig::from_toml_str("[controller]\nang_tol = 2.0\n").is_err());
    }
}
