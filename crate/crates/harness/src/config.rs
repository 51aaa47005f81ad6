//! Experiment configuration.
//!
//! A configuration file is a flat TOML document: one `key = value` pair per
//! line, no tables. Every key is optional. Values are resolved in three
//! layers: a named preset supplies defaults, the file overrides the preset,
//! and command-line flags override the file. Unknown keys are rejected.
//!
//! Angles are given in degrees in the file and stored in radians.

use inekf::filter::{FilterConfig, InitialStd, NoiseParams};
use inekf::lie::Vec3;
use inekf::sim::{GaitConfig, InitialSampler};
use inekf::ImuBias;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FilterSelection {
    Riekf,
    Qekf,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    /// 200 Hz IMU and 500 Hz encoders.
    #[default]
    Desk,
    /// 800 Hz IMU and 2 kHz encoders.
    Paper,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(ConfigError::Invalid(format!("unknown preset `{other}`"))),
        }
    }
}

/// Convergence thresholds. A trial has converged at the first time after
/// which roll and pitch errors stay below `angle_deg` and every body-frame
/// velocity error component stays below `velocity` for `dwell` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriteria {
    pub angle_deg: f64,
    pub velocity: f64,
    pub dwell: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            angle_deg: 2.0,
            velocity: 0.1,
            dwell: 0.5,
        }
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub trials: usize,
    /// Master seed. The sensor stream uses it directly and trial `k` draws
    /// its initial error from [`crate::experiment::trial_seed`].
    pub seed: u64,
    pub filter: FilterSelection,
    /// Simulator settings, including the measurement noise and true biases.
    pub gait: GaitConfig,
    /// Filter settings, including the process noise densities.
    pub filter_config: FilterConfig,
    pub initial_std: InitialStd,
    pub sampler: InitialSampler,
    pub convergence: ConvergenceCriteria,
    /// Log one row every `log_every` IMU samples.
    pub log_every: usize,
    /// Length of the trailing window for the final RMS errors, s.
    pub final_window: f64,
}

impl ExperimentConfig {
    /// Monte-Carlo defaults: 100 trials, the default noise levels, constant zero biases
    /// and bias estimation off.
    pub fn preset(preset: Preset) -> Self {
        let mut gait = match preset {
            Preset::Desk => GaitConfig::default(),
            Preset::Paper => GaitConfig::paper_rates(),
        };
        gait.true_bias = ImuBias::default();
        Self {
            trials: 100,
            seed: 0,
            filter: FilterSelection::Both,
            filter_config: FilterConfig {
                gravity: gait.gravity,
                noise: gait.noise,
                estimate_bias: false,
            },
            gait,
            initial_std: InitialStd::default(),
            sampler: InitialSampler::default(),
            convergence: ConvergenceCriteria::default(),
            log_every: 1,
            final_window: 1.0,
        }
    }

    /// Preset, then the TOML document `file` (if any), then `overrides`.
    pub fn resolve(preset: Preset, file: Option<&str>, overrides: &ConfigFile) -> Result<Self, ConfigError> {
        let mut config = Self::preset(preset);
        if let Some(text) = file {
            let parsed: ConfigFile = toml::from_str(text)?;
            parsed.apply(&mut config);
        }
        overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        self.gait
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.filter_config.noise.is_valid() {
            return bad("filter noise must be finite and non-negative");
        }
        let s = &self.initial_std;
        if [s.orientation, s.velocity, s.position, s.contact, s.gyro_bias, s.accel_bias]
            .iter()
            .any(|x| !(x.is_finite() && *x > 0.0))
        {
            return bad("initial standard deviations must be positive");
        }
        if !(self.sampler.max_angle >= 0.0) || !(self.sampler.max_speed >= 0.0) {
            return bad("initial error ranges must be non-negative");
        }
        let c = &self.convergence;
        if !(c.angle_deg > 0.0) || !(c.velocity > 0.0) || !(c.dwell >= 0.0) {
            return bad("convergence thresholds must be positive");
        }
        if !(self.final_window > 0.0) {
            return bad("final_window must be positive");
        }
        Ok(())
    }

    /// Every key with its resolved value, suitable for echoing to disk.
    pub fn to_file(&self) -> ConfigFile {
        let g = &self.gait;
        let noise = &g.noise;
        let f = &self.filter_config.noise;
        let s = &self.initial_std;
        let arr = |v: Vec3| [v.x, v.y, v.z];
        ConfigFile {
            trials: Some(self.trials),
            seed: Some(self.seed),
            filter: Some(self.filter),
            duration: Some(g.duration),
            imu_rate: Some(g.imu_rate),
            encoder_rate: Some(g.encoder_rate),
            walking: Some(g.walking),
            step_duration: Some(g.step_duration),
            double_support: Some(g.double_support),
            v_start: Some(g.v_start),
            v_end: Some(g.v_end),
            ramp_time: Some(g.ramp_time),
            walk_start: Some(g.walk_start),
            step_height: Some(g.step_height),
            drop_height: Some(g.motion.drop_height),
            gyro_std: Some(noise.gyro_std),
            accel_std: Some(noise.accel_std),
            contact_vel_std: Some(noise.contact_vel_std),
            encoder_std_deg: Some(noise.encoder_std.to_degrees()),
            true_gyro_bias: Some(arr(g.true_bias.gyro)),
            true_accel_bias: Some(arr(g.true_bias.accel)),
            filter_gyro_std: Some(f.gyro_std),
            filter_accel_std: Some(f.accel_std),
            filter_contact_vel_std: Some(f.contact_vel_std),
            filter_encoder_std_deg: Some(f.encoder_std.to_degrees()),
            gyro_bias_walk: Some(f.gyro_bias_std),
            accel_bias_walk: Some(f.accel_bias_std),
            estimate_bias: Some(self.filter_config.estimate_bias),
            init_orientation_deg: Some(s.orientation.to_degrees()),
            init_velocity: Some(s.velocity),
            init_position: Some(s.position),
            init_contact: Some(s.contact),
            init_gyro_bias: Some(s.gyro_bias),
            init_accel_bias: Some(s.accel_bias),
            sample_angle_deg: Some(self.sampler.max_angle.to_degrees()),
            sample_speed: Some(self.sampler.max_speed),
            zero_initial_error: Some(self.sampler.zero),
            converge_angle_deg: Some(self.convergence.angle_deg),
            converge_velocity: Some(self.convergence.velocity),
            converge_dwell: Some(self.convergence.dwell),
            log_every: Some(self.log_every),
            final_window: Some(self.final_window),
        }
    }
}

/// The flat key set of a configuration document. `None` leaves the lower
/// layer's value in place.
///
/// The simulator's measurement noise (`gyro_std`, ...) also seeds the
/// filter's noise model unless the matching `filter_*` key is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub filter: Option<FilterSelection>,

    pub duration: Option<f64>,
    pub imu_rate: Option<f64>,
    pub encoder_rate: Option<f64>,
    pub walking: Option<bool>,
    pub step_duration: Option<f64>,
    pub double_support: Option<f64>,
    pub v_start: Option<f64>,
    pub v_end: Option<f64>,
    pub ramp_time: Option<f64>,
    pub walk_start: Option<f64>,
    pub step_height: Option<f64>,
    pub drop_height: Option<f64>,

    pub gyro_std: Option<f64>,
    pub accel_std: Option<f64>,
    pub contact_vel_std: Option<f64>,
    pub encoder_std_deg: Option<f64>,
    pub true_gyro_bias: Option<[f64; 3]>,
    pub true_accel_bias: Option<[f64; 3]>,

    pub filter_gyro_std: Option<f64>,
    pub filter_accel_std: Option<f64>,
    pub filter_contact_vel_std: Option<f64>,
    pub filter_encoder_std_deg: Option<f64>,
    pub gyro_bias_walk: Option<f64>,
    pub accel_bias_walk: Option<f64>,
    pub estimate_bias: Option<bool>,

    pub init_orientation_deg: Option<f64>,
    pub init_velocity: Option<f64>,
    pub init_position: Option<f64>,
    pub init_contact: Option<f64>,
    pub init_gyro_bias: Option<f64>,
    pub init_accel_bias: Option<f64>,

    pub sample_angle_deg: Option<f64>,
    pub sample_speed: Option<f64>,
    pub zero_initial_error: Option<bool>,

    pub converge_angle_deg: Option<f64>,
    pub converge_velocity: Option<f64>,
    pub converge_dwell: Option<f64>,
    pub log_every: Option<usize>,
    pub final_window: Option<f64>,
}

fn set<T: Copy>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn apply(&self, c: &mut ExperimentConfig) {
        set(&mut c.trials, self.trials);
        set(&mut c.seed, self.seed);
        set(&mut c.filter, self.filter);

        let g = &mut c.gait;
        set(&mut g.duration, self.duration);
        set(&mut g.imu_rate, self.imu_rate);
        set(&mut g.encoder_rate, self.encoder_rate);
        set(&mut g.walking, self.walking);
        set(&mut g.step_duration, self.step_duration);
        set(&mut g.double_support, self.double_support);
        set(&mut g.v_start, self.v_start);
        set(&mut g.v_end, self.v_end);
        set(&mut g.ramp_time, self.ramp_time);
        set(&mut g.walk_start, self.walk_start);
        set(&mut g.step_height, self.step_height);
        set(&mut g.motion.drop_height, self.drop_height);
        if let Some(b) = self.true_gyro_bias {
            g.true_bias.gyro = Vec3::from(b);
        }
        if let Some(b) = self.true_accel_bias {
            g.true_bias.accel = Vec3::from(b);
        }

        let deg = |x: Option<f64>| x.map(f64::to_radians);
        apply_noise(&mut g.noise, self.gyro_std, self.accel_std, self.contact_vel_std, deg(self.encoder_std_deg));
        let f = &mut c.filter_config.noise;
        apply_noise(f, self.gyro_std, self.accel_std, self.contact_vel_std, deg(self.encoder_std_deg));
        apply_noise(
            f,
            self.filter_gyro_std,
            self.filter_accel_std,
            self.filter_contact_vel_std,
            deg(self.filter_encoder_std_deg),
        );
        set(&mut f.gyro_bias_std, self.gyro_bias_walk);
        set(&mut f.accel_bias_std, self.accel_bias_walk);
        set(&mut c.filter_config.estimate_bias, self.estimate_bias);
        c.filter_config.gravity = c.gait.gravity;

        let s = &mut c.initial_std;
        set(&mut s.orientation, deg(self.init_orientation_deg));
        set(&mut s.velocity, self.init_velocity);
        set(&mut s.position, self.init_position);
        set(&mut s.contact, self.init_contact);
        set(&mut s.gyro_bias, self.init_gyro_bias);
        set(&mut s.accel_bias, self.init_accel_bias);

        set(&mut c.sampler.max_angle, deg(self.sample_angle_deg));
        set(&mut c.sampler.max_speed, self.sample_speed);
        set(&mut c.sampler.zero, self.zero_initial_error);

        set(&mut c.convergence.angle_deg, self.converge_angle_deg);
        set(&mut c.convergence.velocity, self.converge_velocity);
        set(&mut c.convergence.dwell, self.converge_dwell);
        set(&mut c.log_every, self.log_every);
        set(&mut c.final_window, self.final_window);
    }
}

fn apply_noise(n: &mut NoiseParams, gyro: Option<f64>, accel: Option<f64>, contact: Option<f64>, encoder: Option<f64>) {
    set(&mut n.gyro_std, gyro);
    set(&mut n.accel_std, accel);
    set(&mut n.contact_vel_std, contact);
    set(&mut n.encoder_std, encoder);
}
