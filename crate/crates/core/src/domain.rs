// SPDX-License-Identifier: Apache-2.0

//! Physical parameters shared by every route: units, the thermal bath and
//! the ε convention of the rate prefactor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Values of ħ and k_B. Every formula carries them explicitly, so a
/// consistent rescaling of units leaves dimensionless observables unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub hbar: f64,
    pub boltzmann: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        UnitSystem {
            hbar: 1.0,
            boltzmann: 1.0,
        }
    }
}

impl UnitSystem {
    pub fn new(hbar: f64, boltzmann: f64) -> Result<Self> {
        ensure_finite("hbar", hbar)?;
        ensure_finite("boltzmann", boltzmann)?;
        if hbar <= 0.0 {
            return Err(Error::invalid("hbar", "must be positive"));
        }
        if boltzmann <= 0.0 {
            return Err(Error::invalid("boltzmann", "must be positive"));
        }
        Ok(UnitSystem { hbar, boltzmann })
    }
}

/// Mass and ħ: all a scattering amplitude needs besides its own parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub mass: f64,
    pub hbar: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Kinematics {
            mass: 1.0,
            hbar: 1.0,
        }
    }
}

/// n·λ³ at or above this value raises the diluteness flag.
pub const DILUTENESS_THRESHOLD: f64 = 0.1;

/// A dilute ideal gas of bath particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    mass: f64,
    temperature: f64,
    density: f64,
    units: UnitSystem,
    beta: f64,
    degeneracy: f64,
}

/// Validated constructor for [`BathSpec`].
pub fn make_bath(mass: f64, temperature: f64, density: f64, units: UnitSystem) -> Result<BathSpec> {
    ensure_finite("mass", mass)?;
    ensure_finite("temperature", temperature)?;
    ensure_finite("density", density)?;
    let units = UnitSystem::new(units.hbar, units.boltzmann)?;
    if mass <= 0.0 {
        return Err(Error::invalid(
            "mass",
            format!("must be positive, got {mass}"),
        ));
    }
    if temperature <= 0.0 {
        return Err(Error::invalid(
            "temperature",
            format!("must be positive, got {temperature}"),
        ));
    }
    if density < 0.0 {
        return Err(Error::invalid(
            "density",
            format!("must be non-negative, got {density}"),
        ));
    }
    let beta = 1.0 / (units.boltzmann * temperature);
    let lambda = (2.0 * PI * units.hbar * units.hbar * beta / mass).sqrt();
    Ok(BathSpec {
        mass,
        temperature,
        density,
        units,
        beta,
        degeneracy: density * lambda.powi(3),
    })
}

impl BathSpec {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn units(&self) -> UnitSystem {
        self.units
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    /// β = 1/(k_B T).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// n·λ³, the occupation of a thermal wavelength cube.
    pub fn degeneracy(&self) -> f64 {
        self.degeneracy
    }

    /// True when the gas is not safely dilute (n·λ³ ≥ 0.1).
    pub fn dilute_warning(&self) -> bool {
        self.degeneracy >= DILUTENESS_THRESHOLD
    }

    /// Thermal momentum scale √(2 m k_B T).
    pub fn thermal_momentum(&self) -> f64 {
        (2.0 * self.mass / self.beta).sqrt()
    }

    pub fn kinematics(&self) -> Kinematics {
        Kinematics {
            mass: self.mass,
            hbar: self.units.hbar,
        }
    }

    /// Same gas at a different number density.
    pub fn with_density(&self, density: f64) -> Result<BathSpec> {
        make_bath(self.mass, self.temperature, density, self.units)
    }

    /// Same gas at a different temperature.
    pub fn with_temperature(&self, temperature: f64) -> Result<BathSpec> {
        make_bath(self.mass, temperature, self.density, self.units)
    }
}

/// Prefactor convention of the rate formula: the corrected value ε = 1, or
/// the earlier Gallis–Fleming value ε = 2π.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    #[default]
    Corrected,
    GallisFleming,
}

impl EpsilonMode {
    pub fn multiplier(self) -> f64 {
        match self {
            EpsilonMode::Corrected => 1.0,
            EpsilonMode::GallisFleming => 2.0 * PI,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EpsilonMode::Corrected => "corrected",
            EpsilonMode::GallisFleming => "gallis-fleming",
        }
    }
}

impl std::str::FromStr for EpsilonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "corrected" | "1" => Ok(EpsilonMode::Corrected),
            "gallis-fleming" | "2pi" => Ok(EpsilonMode::GallisFleming),
            other => Err(Error::invalid(
                "epsilon",
                format!("expected `corrected` or `gallis-fleming`, got `{other}`"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_bath_is_flagged_non_dilute() {
        let bath = make_bath(1.0, 1.0, 0.01, UnitSystem::default()).unwrap();
        assert_eq!(bath.beta(), 1.0);
        // λ = √(2π) for ħ = m = β = 1, so nλ³ = 0.01 (2π)^{3/2}.
        let expected = 0.01 * (2.0 * PI).powf(1.5);
        assert!((bath.degeneracy() - expected).abs() < 1e-15);
        assert!((bath.degeneracy() - 0.157_496_099_457_224_2).abs() < 1e-12);
        assert!(bath.dilute_warning());
    }

    #[test]
    fn zero_density_is_valid() {
        let bath = make_bath(1.0, 1.0, 0.0, UnitSystem::default()).unwrap();
        assert_eq!(bath.density(), 0.0);
        assert!(!bath.dilute_warning());
    }

    #[test]
    fn rejects_unphysical_inputs() {
        let u = UnitSystem::default();
        assert!(matches!(
            make_bath(-1.0, 1.0, 0.1, u),
            Err(Error::InvalidParameter { name: "mass", .. })
        ));
        assert!(make_bath(1.0, 0.0, 0.1, u).is_err());
        assert!(make_bath(1.0, 1.0, -0.1, u).is_err());
        assert!(make_bath(f64::NAN, 1.0, 0.1, u).is_err());
        assert!(make_bath(
            1.0,
            1.0,
            0.1,
            UnitSystem {
                hbar: 0.0,
                boltzmann: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn epsilon_multipliers_are_exact() {
        assert_eq!(EpsilonMode::Corrected.multiplier(), 1.0);
        assert_eq!(EpsilonMode::GallisFleming.multiplier(), 2.0 * PI);
        assert_eq!(
            "gallis_fleming".parse::<EpsilonMode>().unwrap(),
            EpsilonMode::GallisFleming
        );
        assert!("two".parse::<EpsilonMode>().is_err());
    }
}
