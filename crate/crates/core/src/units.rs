//! Physical constants and energy unit conversions.
//!
//! Everything inside the library is SI. MHz, μK, kHz and μm only appear at
//! presentation boundaries (CLI output, CSV/JSON files).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Planck constant, J·s.
    pub h: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Standard gravity, m/s².
    pub g_grav: f64,
    /// Vacuum permittivity, F/m.
    pub epsilon_0: f64,
}

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const STANDARD_GRAVITY: f64 = 9.806_65;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Bohr radius, m.
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Atomic unit of static polarizability 4πε₀a₀³, C·m²/V².
pub const POLARIZABILITY_AU: f64 = 1.648_777_274_36e-41;

pub const CODATA: PhysicalConstants = PhysicalConstants {
    mu_b: BOHR_MAGNETON,
    hbar: HBAR,
    h: PLANCK,
    k_b: BOLTZMANN,
    g_grav: STANDARD_GRAVITY,
    epsilon_0: VACUUM_PERMITTIVITY,
};

/// Presentation units for energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyUnit {
    #[serde(rename = "J")]
    Joule,
    #[serde(rename = "MHz")]
    MHz,
    #[serde(rename = "uK")]
    MicroKelvin,
}

impl EnergyUnit {
    /// Joules per one unit.
    fn scale(self) -> f64 {
        match self {
            EnergyUnit::Joule => 1.0,
            EnergyUnit::MHz => PLANCK * 1e6,
            EnergyUnit::MicroKelvin => BOLTZMANN * 1e-6,
        }
    }
}

impl FromStr for EnergyUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "J" => Ok(EnergyUnit::Joule),
            "MHz" => Ok(EnergyUnit::MHz),
            "uK" | "μK" => Ok(EnergyUnit::MicroKelvin),
            other => Err(Error::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for EnergyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyUnit::Joule => "J",
            EnergyUnit::MHz => "MHz",
            EnergyUnit::MicroKelvin => "uK",
        })
    }
}

/// An energy in joules.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyQuantity(pub f64);

impl EnergyQuantity {
    pub const ZERO: EnergyQuantity = EnergyQuantity(0.0);

    pub fn joules(self) -> f64 {
        self.0
    }

    pub fn from_unit(value: f64, unit: EnergyUnit) -> Self {
        EnergyQuantity(value * unit.scale())
    }

    pub fn from_mhz(mhz: f64) -> Self {
        Self::from_unit(mhz, EnergyUnit::MHz)
    }

    pub fn from_microkelvin(uk: f64) -> Self {
        Self::from_unit(uk, EnergyUnit::MicroKelvin)
    }

    pub fn to_unit(self, unit: EnergyUnit) -> f64 {
        self.0 / unit.scale()
    }

    pub fn mhz(self) -> f64 {
        self.to_unit(EnergyUnit::MHz)
    }

    pub fn microkelvin(self) -> f64 {
        self.to_unit(EnergyUnit::MicroKelvin)
    }
}

impl std::ops::Add for EnergyQuantity {
    type Output = EnergyQuantity;
    fn add(self, rhs: Self) -> Self {
        EnergyQuantity(self.0 + rhs.0)
    }
}

impl std::ops::Sub for EnergyQuantity {
    type Output = EnergyQuantity;
    fn sub(self, rhs: Self) -> Self {
        EnergyQuantity(self.0 - rhs.0)
    }
}

/// Converts an energy to the requested presentation unit.
pub fn convert_energy(value: EnergyQuantity, unit: &str) -> Result<f64> {
    Ok(value.to_unit(unit.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn h_is_two_pi_hbar() {
        assert!((CODATA.h - 2.0 * PI * CODATA.hbar).abs() / CODATA.h < 1e-12);
    }

    #[test]
    fn mhz_definition() {
        let e = EnergyQuantity(PLANCK * 16.1e6);
        assert_relative_eq!(convert_energy(e, "MHz").unwrap(), 16.1, max_relative = 1e-14);
    }

    #[test]
    fn mhz_to_microkelvin() {
        // h·16.1 MHz / k_B = 772.7 μK
        let e = EnergyQuantity(PLANCK * 16.1e6);
        let uk = convert_energy(e, "uK").unwrap();
        assert!((uk - 772.7).abs() < 0.1, "{uk}");
    }

    #[test]
    fn zero_is_zero_everywhere() {
        for u in ["J", "MHz", "uK"] {
            assert_eq!(convert_energy(EnergyQuantity::ZERO, u).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_unit() {
        assert!(matches!(
            convert_energy(EnergyQuantity(1.0), "eV"),
            Err(Error::UnknownUnit(_))
        ));
    }

    #[test]
    fn quoted_pairs_are_consistent() {
        // 16.1 MHz ↔ 770 μK and 21.8 MHz ↔ 1.05 mK
        for (mhz, uk) in [(16.1, 770.0), (21.8, 1050.0)] {
            let got = EnergyQuantity::from_mhz(mhz).microkelvin();
            assert!((got - uk).abs() / uk < 0.015, "{mhz} MHz -> {got} uK");
        }
    }
}
