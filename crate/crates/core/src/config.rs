//! Tool configuration: a strict, human-editable TOML file with validated
//! defaults. Unknown keys are errors, not warnings, so a typo in a
//! sensitivity cannot silently change reward semantics.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::GaitPattern;
use crate::harness::{HarnessConfig, RandomizationConfig};
use crate::imitation::{RewardConfig, TerminationConfig};
use crate::ocp::OcpWeights;
use crate::ocp::SolverSettings;
use crate::synthesis::SynthesisConfig;
use crate::vhipm::GravityVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    /// Policy/frame rate, Hz.
    pub policy_hz: f64,
    /// Trajectory-optimization step, seconds.
    pub solver_dt: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            policy_hz: 50.0,
            solver_dt: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsConfig {
    /// Reference base height, meters.
    pub base_height: f64,
    /// Swing apex clearance, meters.
    pub swing_height: f64,
}

impl Default for TargetsConfig {
    fn default() -> Self {
        Self {
            base_height: 0.32,
            swing_height: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Nominal hip xy positions per leg (FL, FR, HL, HR) in the yaw frame.
    pub hip_positions: [[f64; 2]; 4],
    /// Gravity magnitude, m/s^2.
    pub gravity: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hip_positions: [[0.19, 0.13], [0.19, -0.13], [-0.19, 0.13], [-0.19, -0.13]],
            gravity: 9.81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcpConfig {
    pub velocity_tracking: f64,
    pub height_tracking: f64,
    pub foothold_reg: f64,
    pub input_reg: f64,
    pub weight_sum_penalty: f64,
    pub weight_nonneg_penalty: f64,
    /// Optional smoothness on consecutive vertical accelerations; zero
    /// disables the term.
    pub input_smoothness: f64,
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for OcpConfig {
    fn default() -> Self {
        let w = OcpWeights::<f64>::default();
        let s = SolverSettings::<f64>::default();
        Self {
            velocity_tracking: w.velocity_tracking,
            height_tracking: w.height_tracking,
            foothold_reg: w.foothold_reg,
            input_reg: w.input_reg,
            weight_sum_penalty: w.weight_sum_penalty,
            weight_nonneg_penalty: w.weight_nonneg_penalty,
            input_smoothness: w.input_smoothness,
            gradient_tol: s.gradient_tol,
            max_iterations: s.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisBlock {
    /// Feedback gain of the foothold planning rule.
    pub raibert_gain: f64,
    /// Queue refill threshold as a fraction of one gait period.
    pub queue_threshold_fraction: f64,
    /// Time constant of the terrain base-offset filter, seconds.
    pub terrain_filter_tau: f64,
}

impl Default for SynthesisBlock {
    fn default() -> Self {
        Self {
            raibert_gain: 0.03,
            queue_threshold_fraction: 0.5,
            terrain_filter_tau: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardBlock {
    pub base_height: f64,
    pub base_velocity: [f64; 3],
    pub yaw_rate: f64,
    pub feet_position: [f64; 3],
    pub action_rate: f64,
    pub feet_slip: f64,
    pub pitch_roll: f64,
}

impl Default for RewardBlock {
    fn default() -> Self {
        let r = RewardConfig::<f64>::default();
        Self {
            base_height: r.base_height,
            base_velocity: r.base_velocity,
            yaw_rate: r.yaw_rate,
            feet_position: r.feet_position,
            action_rate: r.action_rate,
            feet_slip: r.feet_slip,
            pitch_roll: r.pitch_roll,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationBlock {
    pub min_base_height: f64,
    pub max_tilt: f64,
}

impl Default for TerminationBlock {
    fn default() -> Self {
        let t = TerminationConfig::<f64>::default();
        Self {
            min_base_height: t.min_base_height,
            max_tilt: t.max_tilt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomizationBlock {
    pub linear_impulse: f64,
    pub angular_impulse: f64,
    pub friction: [f64; 2],
    pub perlin_frequency: [f64; 2],
    pub perlin_magnitude: [f64; 2],
    /// Cone half-angle in degrees (converted to radians internally).
    pub gravity_cone_half_angle_deg: f64,
    pub actuator_latency: f64,
}

impl Default for RandomizationBlock {
    fn default() -> Self {
        Self {
            linear_impulse: 1.5,
            angular_impulse: 1.5,
            friction: [0.5, 1.25],
            perlin_frequency: [0.0, 0.9],
            perlin_magnitude: [0.0, 0.1],
            gravity_cone_half_angle_deg: 10.0,
            actuator_latency: 0.03,
        }
    }
}

/// Policy-training hyperparameters, stored as inert defaults; nothing in
/// this toolkit consumes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub num_epochs: usize,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
    pub discount: f64,
    pub learning_rate: f64,
    pub episode_length: usize,
    pub initial_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            num_epochs: 10,
            value_coeff: 0.5,
            entropy_coeff: 0.01,
            discount: 0.95,
            learning_rate: 5e-5,
            episode_length: 128,
            initial_std: (-1.0_f64).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitEntry {
    pub period: f64,
    pub duty_cycle: f64,
    /// Offsets of FR, HL, HR relative to FL.
    pub phase_offsets: [f64; 3],
}

impl Default for GaitEntry {
    fn default() -> Self {
        Self {
            period: 0.5,
            duty_cycle: 0.5,
            phase_offsets: [0.0; 3],
        }
    }
}

/// The whole tool configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    pub output_dir: String,
    pub rates: RatesConfig,
    pub targets: TargetsConfig,
    pub model: ModelConfig,
    pub ocp: OcpConfig,
    pub synthesis: SynthesisBlock,
    pub reward: RewardBlock,
    pub termination: TerminationBlock,
    pub randomization: RandomizationBlock,
    pub ppo: PpoConfig,
    /// Gait library keyed by name; the five built-ins are always present
    /// unless overridden.
    pub gaits: BTreeMap<String, GaitEntry>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        let mut gaits = BTreeMap::new();
        for gait in GaitPattern::<f64>::builtins() {
            gaits.insert(
                gait.name.clone(),
                GaitEntry {
                    period: gait.period,
                    duty_cycle: gait.duty_cycle,
                    phase_offsets: gait.phase_offsets,
                },
            );
        }
        Self {
            output_dir: "out".into(),
            rates: RatesConfig::default(),
            targets: TargetsConfig::default(),
            model: ModelConfig::default(),
            ocp: OcpConfig::default(),
            synthesis: SynthesisBlock::default(),
            reward: RewardBlock::default(),
            termination: TerminationBlock::default(),
            randomization: RandomizationBlock::default(),
            ppo: PpoConfig::default(),
            gaits,
        }
    }
}

impl ToolConfig {
    /// Parses and validates a configuration string. Missing blocks fall
    /// back to the defaults; an empty string yields the full defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: ToolConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // User gait entries override built-ins by name; built-ins absent
        // from the file are kept available.
        let defaults = ToolConfig::default();
        for (name, entry) in defaults.gaits {
            config.gaits.entry(name).or_insert(entry);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rates.policy_hz > 0.0) {
            return Err(Error::Config("rates.policy_hz must be > 0".into()));
        }
        if !(self.rates.solver_dt > 0.0) {
            return Err(Error::Config("rates.solver_dt must be > 0".into()));
        }
        if !(self.targets.base_height > 0.0) {
            return Err(Error::Config("targets.base_height must be > 0".into()));
        }
        if self.targets.swing_height < 0.0 {
            return Err(Error::Config("targets.swing_height must be >= 0".into()));
        }
        if !(self.model.gravity > 0.0) {
            return Err(Error::Config("model.gravity must be > 0".into()));
        }
        if self.synthesis.queue_threshold_fraction <= 0.0 {
            return Err(Error::Config(
                "synthesis.queue_threshold_fraction must be > 0".into(),
            ));
        }
        if self.synthesis.terrain_filter_tau < 0.0 {
            return Err(Error::Config(
                "synthesis.terrain_filter_tau must be >= 0".into(),
            ));
        }
        self.ocp_weights().validate()?;
        self.solver_settings().validate()?;
        self.reward_config().validate()?;
        self.randomization_config().validate()?;
        if !(self.termination.min_base_height > 0.0) {
            return Err(Error::Config(
                "termination.min_base_height must be > 0".into(),
            ));
        }
        if !(self.termination.max_tilt > 0.0) {
            return Err(Error::Config("termination.max_tilt must be > 0".into()));
        }
        for name in self.gaits.keys() {
            self.gait(name)
                .map_err(|e| Error::Config(format!("gaits.{name}: {e}")))?;
        }
        Ok(())
    }

    /// Looks up a gait by name in the library.
    pub fn gait(&self, name: &str) -> Result<GaitPattern<f64>> {
        let entry = self.gaits.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.gaits.keys().map(String::as_str).collect();
            Error::Config(format!(
                "unknown gait '{name}' (available: {})",
                known.join(", ")
            ))
        })?;
        GaitPattern::new(name, entry.period, entry.duty_cycle, entry.phase_offsets)
    }

    pub fn frame_dt(&self) -> f64 {
        1.0 / self.rates.policy_hz
    }

    pub fn hip_offsets(&self) -> [Vector3<f64>; 4] {
        self.model
            .hip_positions
            .map(|h| Vector3::new(h[0], h[1], 0.0))
    }

    pub fn gravity_vector(&self) -> GravityVector<f64> {
        GravityVector::new(Vector3::new(0.0, 0.0, -self.model.gravity))
    }

    pub fn ocp_weights(&self) -> OcpWeights<f64> {
        OcpWeights {
            velocity_tracking: self.ocp.velocity_tracking,
            height_tracking: self.ocp.height_tracking,
            foothold_reg: self.ocp.foothold_reg,
            input_reg: self.ocp.input_reg,
            weight_sum_penalty: self.ocp.weight_sum_penalty,
            weight_nonneg_penalty: self.ocp.weight_nonneg_penalty,
            input_smoothness: self.ocp.input_smoothness,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings<f64> {
        SolverSettings {
            gradient_tol: self.ocp.gradient_tol,
            max_iterations: self.ocp.max_iterations,
            ..SolverSettings::default()
        }
    }

    pub fn reward_config(&self) -> RewardConfig<f64> {
        RewardConfig {
            base_height: self.reward.base_height,
            base_velocity: self.reward.base_velocity,
            yaw_rate: self.reward.yaw_rate,
            feet_position: self.reward.feet_position,
            action_rate: self.reward.action_rate,
            feet_slip: self.reward.feet_slip,
            pitch_roll: self.reward.pitch_roll,
        }
    }

    pub fn termination_config(&self) -> TerminationConfig<f64> {
        TerminationConfig {
            min_base_height: self.termination.min_base_height,
            max_tilt: self.termination.max_tilt,
        }
    }

    pub fn randomization_config(&self) -> RandomizationConfig<f64> {
        RandomizationConfig {
            linear_impulse: self.randomization.linear_impulse,
            angular_impulse: self.randomization.angular_impulse,
            friction: self.randomization.friction,
            perlin_frequency: self.randomization.perlin_frequency,
            perlin_magnitude: self.randomization.perlin_magnitude,
            gravity_cone_half_angle: self.randomization.gravity_cone_half_angle_deg.to_radians(),
            actuator_latency: self.randomization.actuator_latency,
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig<f64> {
        SynthesisConfig {
            solver_dt: self.rates.solver_dt,
            frame_dt: self.frame_dt(),
            target_height: self.targets.base_height,
            swing_height: self.targets.swing_height,
            hip_offsets: self.hip_offsets(),
            raibert_gain: self.synthesis.raibert_gain,
            gravity: self.gravity_vector(),
            weights: self.ocp_weights(),
            solver: self.solver_settings(),
            queue_threshold_fraction: self.synthesis.queue_threshold_fraction,
            terrain_filter_tau: self.synthesis.terrain_filter_tau,
        }
    }

    pub fn harness_config(&self, latency: bool) -> HarnessConfig<f64> {
        HarnessConfig {
            synthesis: self.synthesis_config(),
            reward: self.reward_config(),
            control_dt: self.frame_dt(),
            horizon_periods: 2.0,
            latency: latency.then_some(self.randomization.actuator_latency),
        }
    }
}

/// Loads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ToolConfig> {
    let text = std::fs::read_to_string(path)?;
    ToolConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_yields_all_defaults() {
        let config = ToolConfig::from_toml_str("").unwrap();
        assert_eq!(config, ToolConfig::default());
        let trot = config.gait("trot").unwrap();
        assert_eq!(trot.period, 0.5);
        assert_eq!(config.reward.base_height, 0.05);
        assert_eq!(config.targets.base_height, 0.32);
        assert_eq!(config.gaits.len(), 5);
    }

    #[test]
    fn out_of_range_values_name_the_key() {
        let err = ToolConfig::from_toml_str(
            "[gaits.custom]\nperiod = 0.5\nduty_cycle = 1.3\nphase_offsets = [0.0, 0.0, 0.0]\n",
        )
        .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("duty_cycle"), "{message}");
        assert!(message.contains("custom"), "{message}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ToolConfig::from_toml_str("unknown_key = 1\n").is_err());
        assert!(ToolConfig::from_toml_str("[reward]\nbase_heigth = 0.05\n").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut config = ToolConfig::default();
        config.reward.base_velocity = [0.31, 0.11, 0.29];
        config.ocp.velocity_tracking = 12.5;
        config.gaits.insert(
            "amble".into(),
            GaitEntry {
                period: 0.45,
                duty_cycle: 0.7,
                phase_offsets: [0.25, 0.5, 0.75],
            },
        );
        let text = config.to_toml_string().unwrap();
        let reloaded = ToolConfig::from_toml_str(&text).unwrap();
        assert_eq!(config, reloaded);
        // Twice more for idempotence of the serialized form.
        let text2 = reloaded.to_toml_string().unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn user_gaits_merge_with_builtins() {
        let config = ToolConfig::from_toml_str(
            "[gaits.amble]\nperiod = 0.45\nduty_cycle = 0.7\nphase_offsets = [0.25, 0.5, 0.75]\n",
        )
        .unwrap();
        assert!(config.gait("amble").is_ok());
        assert!(config.gait("trot").is_ok());
        assert_eq!(config.gaits.len(), 6);
        assert!(config.gait("sprint").is_err());
    }

    #[test]
    fn shipped_default_file_matches_builtin_defaults() {
        let path =
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml");
        let config = load_config(&path).unwrap();
        assert_eq!(config, ToolConfig::default());
    }

    #[test]
    fn negative_sensitivity_is_rejected() {
        let err = ToolConfig::from_toml_str("[reward]\nbase_height = -0.05\n").unwrap_err();
        assert!(err.to_string().contains("base_height"));
    }
}
