// SPDX-License-Identifier: Apache-2.0

//! Flat `section.key=value` run configuration.
//!
//! Lines are trimmed; blank lines and lines starting with `#` are skipped.
//! Every key has a default, so an empty file is a valid configuration.
//! Lengths in `grid.*`, `mc.separations` and `evolve.length` are in units of
//! ħ/q_th unless `grid.unit=absolute`; `eta.momentum` is in units of q_th.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use decoh_core::rate::{QuadratureSpec, Route};
use decoh_core::{
    make_bath, AmplitudeModel, BathSpec, EpsilonMode, LMax, PotentialModel, UnitSystem, Vec3,
};
use serde::Serialize;
use thiserror::Error;

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: String, line: usize },
    Flag(String),
}

impl Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag(flag) => write!(f, "{flag}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self.origin {
            Origin::File { line, .. } => Some(line),
            Origin::Flag(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ConstantSWave,
    HardSphere,
    BornGaussian,
    BornYukawa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Multiples of ħ/q_th.
    Thermal,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

/// Every setting of a run, with defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mass: f64,
    pub temperature: f64,
    pub density: f64,
    pub hbar: f64,
    pub boltzmann: f64,

    pub model: ModelKind,
    pub f0: f64,
    /// Hard-sphere radius, in the grid length unit.
    pub radius: f64,
    pub l_max: Option<usize>,
    pub strength: f64,
    /// Gaussian potential width, in the grid length unit.
    pub width: f64,
    /// Yukawa screening κ, in inverse grid length units.
    pub screening: f64,

    pub epsilon: EpsilonMode,
    pub route: Route,

    pub grid_unit: LengthUnit,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_count: usize,
    pub grid_spacing: Spacing,
    pub grid_axis: [f64; 3],

    pub quad: QuadratureSpec,

    pub seed: u64,
    pub mc_samples: usize,
    pub mc_bar_fraction: f64,
    pub mc_delta_t: Option<f64>,
    pub mc_window: Option<f64>,
    pub mc_separations: Vec<f64>,

    pub eta_momentum: f64,
    pub eta_angle_deg: f64,

    pub gbar_q_count: usize,
    pub gbar_omega_count: usize,

    pub evolve_points: usize,
    pub evolve_length: f64,
    pub evolve_times: Vec<f64>,
    pub evolve_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mass: 1.0,
            temperature: 1.0,
            density: 0.01,
            hbar: 1.0,
            boltzmann: 1.0,
            model: ModelKind::HardSphere,
            f0: 0.5,
            radius: 1.0,
            l_max: None,
            strength: 0.05,
            width: 1.0,
            screening: 1.0,
            epsilon: EpsilonMode::Corrected,
            route: Route::General,
            grid_unit: LengthUnit::Thermal,
            grid_min: 0.1,
            grid_max: 20.0,
            grid_count: 10,
            grid_spacing: Spacing::Log,
            grid_axis: [0.0, 0.0, 1.0],
            quad: QuadratureSpec::default(),
            seed: 1,
            mc_samples: 100_000,
            mc_bar_fraction: decoh_core::thermal::DEFAULT_BAR_FRACTION,
            mc_delta_t: None,
            mc_window: None,
            mc_separations: vec![0.5, 1.0, 2.0],
            eta_momentum: 1.0,
            eta_angle_deg: 90.0,
            gbar_q_count: 5,
            gbar_omega_count: 5,
            evolve_points: 64,
            evolve_length: 8.0,
            evolve_times: vec![0.0, 10.0, 100.0],
            evolve_threshold: (-1f64).exp(),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_list(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|v| parse::<f64>(v.trim())).collect()
}

fn parse_auto<T: FromStr>(value: &str) -> Result<Option<T>, String>
where
    T::Err: Display,
{
    if value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

/// Accepted keys, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "bath.mass",
    "bath.temperature",
    "bath.density",
    "units.hbar",
    "units.boltzmann",
    "model.kind",
    "model.f0",
    "model.radius",
    "model.l_max",
    "potential.strength",
    "potential.width",
    "potential.screening",
    "epsilon",
    "route",
    "grid.unit",
    "grid.min",
    "grid.max",
    "grid.count",
    "grid.spacing",
    "grid.axis",
    "quad.radial_nodes",
    "quad.qmax",
    "quad.theta_nodes",
    "quad.phi_nodes",
    "quad.refine_tol",
    "quad.max_levels",
    "quad.max_nodes",
    "mc.seed",
    "mc.samples",
    "mc.bar_fraction",
    "mc.delta_t",
    "mc.window",
    "mc.separations",
    "eta.momentum",
    "eta.angle_deg",
    "gbar.q_count",
    "gbar.omega_count",
    "evolve.points",
    "evolve.length",
    "evolve.times",
    "evolve.threshold",
];

impl RunConfig {
    /// Sets one key. Errors are plain messages; callers add the origin.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "bath.mass" => self.mass = parse(v)?,
            "bath.temperature" => self.temperature = parse(v)?,
            "bath.density" => self.density = parse(v)?,
            "units.hbar" => self.hbar = parse(v)?,
            "units.boltzmann" => self.boltzmann = parse(v)?,
            "model.kind" => {
                self.model = match v {
                    "constant_s_wave" | "constant" => ModelKind::ConstantSWave,
                    "hard_sphere" => ModelKind::HardSphere,
                    "born_gaussian" => ModelKind::BornGaussian,
                    "born_yukawa" => ModelKind::BornYukawa,
                    other => {
                        return Err(format!(
                            "unknown model `{other}` (constant_s_wave, hard_sphere, born_gaussian, born_yukawa)"
                        ))
                    }
                }
            }
            "model.f0" => self.f0 = parse(v)?,
            "model.radius" => self.radius = parse(v)?,
            "model.l_max" => self.l_max = parse_auto(v)?,
            "potential.strength" => self.strength = parse(v)?,
            "potential.width" => self.width = parse(v)?,
            "potential.screening" => self.screening = parse(v)?,
            "epsilon" => self.epsilon = v.parse().map_err(|e: decoh_core::Error| e.to_string())?,
            "route" => {
                self.route = match v {
                    "general" => Route::General,
                    "replacement" => Route::Replacement,
                    "weak_coupling" | "weak" => Route::WeakCoupling,
                    other => return Err(format!("unknown route `{other}` (general, replacement, weak_coupling)")),
                }
            }
            "grid.unit" => {
                self.grid_unit = match v {
                    "thermal" => LengthUnit::Thermal,
                    "absolute" => LengthUnit::Absolute,
                    other => return Err(format!("unknown length unit `{other}` (thermal, absolute)")),
                }
            }
            "grid.min" => self.grid_min = parse(v)?,
            "grid.max" => self.grid_max = parse(v)?,
            "grid.count" => self.grid_count = parse(v)?,
            "grid.spacing" => {
                self.grid_spacing = match v {
                    "linear" => Spacing::Linear,
                    "log" => Spacing::Log,
                    other => return Err(format!("unknown spacing `{other}` (linear, log)")),
                }
            }
            "grid.axis" => {
                let a = parse_list(v)?;
                if a.len() != 3 {
                    return Err(format!("expected three components, got {}", a.len()));
                }
                self.grid_axis = [a[0], a[1], a[2]];
            }
            "quad.radial_nodes" => self.quad.radial_nodes = parse(v)?,
            "quad.qmax" => self.quad.radial_qmax_thermal_units = parse(v)?,
            "quad.theta_nodes" => self.quad.angular_theta_nodes = parse(v)?,
            "quad.phi_nodes" => self.quad.angular_phi_nodes = parse(v)?,
            "quad.refine_tol" => self.quad.refine_tol = parse(v)?,
            "quad.max_levels" => self.quad.max_levels = parse(v)?,
            "quad.max_nodes" => self.quad.max_nodes = parse(v)?,
            "mc.seed" => self.seed = parse(v)?,
            "mc.samples" => self.mc_samples = parse(v)?,
            "mc.bar_fraction" => self.mc_bar_fraction = parse(v)?,
            "mc.delta_t" => self.mc_delta_t = parse_auto(v)?,
            "mc.window" => self.mc_window = parse_auto(v)?,
            "mc.separations" => self.mc_separations = parse_list(v)?,
            "eta.momentum" => self.eta_momentum = parse(v)?,
            "eta.angle_deg" => self.eta_angle_deg = parse(v)?,
            "gbar.q_count" => self.gbar_q_count = parse(v)?,
            "gbar.omega_count" => self.gbar_omega_count = parse(v)?,
            "evolve.points" => self.evolve_points = parse(v)?,
            "evolve.length" => self.evolve_length = parse(v)?,
            "evolve.times" => self.evolve_times = parse_list(v)?,
            "evolve.threshold" => self.evolve_threshold = parse(v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies a config file's text on top of the current values.
    pub fn apply_text(&mut self, text: &str, path: &str) -> Result<(), ConfigError> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_string(),
                line: i + 1,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    origin,
                    message: format!("expected key=value, got `{line}`"),
                });
            };
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err(ConfigError {
                    origin,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            self.set(key, value)
                .map_err(|message| ConfigError { origin, message })?;
        }
        Ok(())
    }

    /// Applies one `--set key=value` override.
    pub fn apply_override(&mut self, item: &str) -> Result<(), ConfigError> {
        let origin = Origin::Flag(format!("--set {item}"));
        let Some((key, value)) = item.split_once('=') else {
            return Err(ConfigError {
                origin,
                message: "expected key=value".into(),
            });
        };
        self.set(key, value)
            .map_err(|message| ConfigError { origin, message })
    }

    pub fn bath(&self) -> decoh_core::Result<BathSpec> {
        make_bath(
            self.mass,
            self.temperature,
            self.density,
            UnitSystem::new(self.hbar, self.boltzmann)?,
        )
    }

    /// Conversion factor from configured lengths to absolute lengths.
    pub fn length_scale(&self, bath: &BathSpec) -> f64 {
        match self.grid_unit {
            LengthUnit::Thermal => bath.hbar() / bath.thermal_momentum(),
            LengthUnit::Absolute => 1.0,
        }
    }

    pub fn amplitude_model(&self, bath: &BathSpec) -> decoh_core::Result<AmplitudeModel> {
        let l = self.length_scale(bath);
        let model = match self.model {
            ModelKind::ConstantSWave => AmplitudeModel::ConstantSWave { f0: self.f0 * l },
            ModelKind::HardSphere => AmplitudeModel::HardSphere {
                radius: self.radius * l,
                l_max: self.l_max.map_or(LMax::Auto, LMax::Fixed),
            },
            ModelKind::BornGaussian | ModelKind::BornYukawa => AmplitudeModel::BornPotential {
                potential: self.potential(bath).expect("Born model has a potential"),
            },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn potential(&self, bath: &BathSpec) -> Option<PotentialModel> {
        let l = self.length_scale(bath);
        match self.model {
            ModelKind::BornGaussian => Some(PotentialModel::Gaussian {
                strength: self.strength,
                width: self.width * l,
            }),
            ModelKind::BornYukawa => Some(PotentialModel::Yukawa {
                strength: self.strength,
                screening: self.screening / l,
            }),
            _ => None,
        }
    }

    pub fn axis(&self) -> decoh_core::Result<Vec3> {
        Vec3::new(self.grid_axis[0], self.grid_axis[1], self.grid_axis[2]).unit()
    }

    /// |R| values of the separation grid in absolute units.
    pub fn grid_radii(&self, bath: &BathSpec) -> Result<Vec<f64>, String> {
        let (lo, hi, n) = (self.grid_min, self.grid_max, self.grid_count);
        if n == 0 {
            return Err("grid.count must be at least 1".into());
        }
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return Err(format!(
                "grid range [{lo}, {hi}] must be finite with 0 <= min <= max"
            ));
        }
        if self.grid_spacing == Spacing::Log && lo <= 0.0 {
            return Err("grid.min must be positive for log spacing".into());
        }
        let l = self.length_scale(bath);
        let t = |i: usize| {
            if n == 1 {
                0.0
            } else {
                i as f64 / (n - 1) as f64
            }
        };
        Ok((0..n)
            .map(|i| match self.grid_spacing {
                Spacing::Linear => lo + (hi - lo) * t(i),
                Spacing::Log => lo * (hi / lo).powf(t(i)),
            })
            .map(|r| r * l)
            .collect())
    }

    /// key=value pairs of the resolved configuration, in [`KEYS`] order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let auto = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let values = [
            self.mass.to_string(),
            self.temperature.to_string(),
            self.density.to_string(),
            self.hbar.to_string(),
            self.boltzmann.to_string(),
            serde_json::to_value(self.model)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string(),
            self.f0.to_string(),
            self.radius.to_string(),
            self.l_max.map_or("auto".to_string(), |l| l.to_string()),
            self.strength.to_string(),
            self.width.to_string(),
            self.screening.to_string(),
            self.epsilon.label().to_string(),
            self.route.label().to_string(),
            serde_json::to_value(self.grid_unit)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string(),
            self.grid_min.to_string(),
            self.grid_max.to_string(),
            self.grid_count.to_string(),
            serde_json::to_value(self.grid_spacing)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string(),
            list(&self.grid_axis),
            self.quad.radial_nodes.to_string(),
            self.quad.radial_qmax_thermal_units.to_string(),
            self.quad.angular_theta_nodes.to_string(),
            self.quad.angular_phi_nodes.to_string(),
            self.quad.refine_tol.to_string(),
            self.quad.max_levels.to_string(),
            self.quad.max_nodes.to_string(),
            self.seed.to_string(),
            self.mc_samples.to_string(),
            self.mc_bar_fraction.to_string(),
            auto(self.mc_delta_t),
            auto(self.mc_window),
            list(&self.mc_separations),
            self.eta_momentum.to_string(),
            self.eta_angle_deg.to_string(),
            self.gbar_q_count.to_string(),
            self.gbar_omega_count.to_string(),
            self.evolve_points.to_string(),
            self.evolve_length.to_string(),
            list(&self.evolve_times),
            self.evolve_threshold.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}
