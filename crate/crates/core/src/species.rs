//! Atom species records and the built-in registry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{EnergyQuantity, ATOMIC_MASS_UNIT, BOHR_RADIUS, HBAR, POLARIZABILITY_AU};

/// Ground-state atomic data needed by the trap model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Scalar static polarizability, C·m²/V².
    pub alpha_static: f64,
    /// Product m_F·g_F of the trapped Zeeman state (positive for weak-field seekers).
    pub mf_gf: f64,
    /// Wavelength used for the recoil energy, m.
    pub lambda_line: f64,
    /// s-wave scattering length, m.
    pub a_scatter: f64,
}

impl AtomSpecies {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64); 5] = [
            ("mass", self.mass),
            ("alpha_static", self.alpha_static),
            ("mf_gf", self.mf_gf),
            ("lambda_line", self.lambda_line),
            ("a_scatter", self.a_scatter),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// ¹³³Cs in |F=3, m_F=−3⟩: g_F = −1/4 so m_F·g_F = 3/4.
    pub fn cs133() -> Self {
        AtomSpecies {
            name: "Cs133".into(),
            mass: 132.905_451_961 * ATOMIC_MASS_UNIT,
            alpha_static: 401.0 * POLARIZABILITY_AU,
            mf_gf: 0.75,
            lambda_line: 852.347e-9,
            // Cs scattering lengths are strongly field dependent; this is a
            // representative low-field value.
            a_scatter: 280.0 * BOHR_RADIUS,
        }
    }

    /// ⁸⁷Rb in |F=2, m_F=2⟩: g_F = 1/2.
    pub fn rb87() -> Self {
        AtomSpecies {
            name: "Rb87".into(),
            mass: 86.909_180_527 * ATOMIC_MASS_UNIT,
            alpha_static: 318.8 * POLARIZABILITY_AU,
            mf_gf: 1.0,
            lambda_line: 780.241e-9,
            a_scatter: 98.98 * BOHR_RADIUS,
        }
    }

    /// ⁴⁰K in |F=9/2, m_F=9/2⟩: g_F = 2/9.
    pub fn k40() -> Self {
        AtomSpecies {
            name: "K40".into(),
            mass: 39.963_998_48 * ATOMIC_MASS_UNIT,
            alpha_static: 290.58 * POLARIZABILITY_AU,
            mf_gf: 1.0,
            lambda_line: 766.701e-9,
            a_scatter: 169.7 * BOHR_RADIUS,
        }
    }

    /// Copy of this species with a different mass and everything else equal.
    pub fn with_mass(&self, mass: f64) -> Self {
        AtomSpecies {
            mass,
            ..self.clone()
        }
    }
}

fn canonical(label: &str) -> Option<&'static str> {
    match label.to_ascii_lowercase().as_str() {
        "cs" | "cs133" | "133cs" => Some("Cs133"),
        "rb" | "rb87" | "87rb" => Some("Rb87"),
        "k" | "k40" | "40k" => Some("K40"),
        _ => None,
    }
}

/// Looks up a built-in species by label ("Cs", "Cs133", "Rb87", ...).
pub fn species_lookup(name: &str) -> Result<AtomSpecies> {
    match canonical(name) {
        Some("Cs133") => Ok(AtomSpecies::cs133()),
        Some("Rb87") => Ok(AtomSpecies::rb87()),
        Some("K40") => Ok(AtomSpecies::k40()),
        _ => Err(Error::UnknownSpecies(name.to_string())),
    }
}

/// Built-in species plus config-level overrides and additions.
#[derive(Debug, Clone, Default)]
pub struct SpeciesRegistry {
    custom: BTreeMap<String, AtomSpecies>,
}

impl SpeciesRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers or replaces a species. Overrides of a built-in are keyed by
    /// its canonical name so that "Cs" and "Cs133" resolve to the same record.
    pub fn insert(&mut self, species: AtomSpecies) -> Result<()> {
        species.validate()?;
        let key = canonical(&species.name)
            .map(str::to_string)
            .unwrap_or_else(|| species.name.clone());
        self.custom.insert(key, species);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<AtomSpecies> {
        let key = canonical(name).unwrap_or(name);
        if let Some(s) = self.custom.get(key) {
            return Ok(s.clone());
        }
        species_lookup(name)
    }
}

/// Photon recoil energy ħ²k²/2m with k = 2π/λ.
pub fn recoil_energy(species: &AtomSpecies) -> EnergyQuantity {
    let k = 2.0 * std::f64::consts::PI / species.lambda_line;
    EnergyQuantity(HBAR * HBAR * k * k / (2.0 * species.mass))
}
