//! One-dimensional quantum-gas criteria for a ring trap.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::species::AtomSpecies;
use crate::units::{BOLTZMANN, HBAR};

/// k_B T / ħω_⊥.
pub fn one_d_ratio(temperature: f64, omega_perp: f64) -> f64 {
    BOLTZMANN * temperature / (HBAR * omega_perp)
}

/// Upper bound on the atom number for the Tonks-Girardeau regime,
/// 2 m ω_⊥ a L / ħ.
pub fn tg_atom_bound(species: &AtomSpecies, omega_perp: f64, ring_length: f64) -> f64 {
    2.0 * species.mass * omega_perp * species.a_scatter * ring_length / HBAR
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLength {
    /// l_c, m.
    pub l_c: f64,
    /// (1/n) / l_c; above 1 the gas is on the Tonks-Girardeau side.
    pub tg_indicator: f64,
}

/// l_c = (ħ / 2 m n ω_⊥ a)^½ and the spacing-to-l_c indicator.
pub fn correlation_length(density: f64, omega_perp: f64, species: &AtomSpecies) -> CorrelationLength {
    let l_c = (HBAR / (2.0 * species.mass * density * omega_perp * species.a_scatter)).sqrt();
    CorrelationLength {
        l_c,
        tg_indicator: 1.0 / (density * l_c),
    }
}

/// Outcome of the μ ≪ ħω_⊥ check, which needs an externally supplied μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ChemicalPotentialCheck {
    RequiresExternalInput,
    Evaluated { ratio: f64, pass: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasCriteria {
    pub species: String,
    /// K
    pub temperature: f64,
    pub omega_perp: f64,
    pub ring_length: f64,
    pub atom_number: f64,
    pub density: f64,
    pub ratio_1d: f64,
    pub l_c: f64,
    pub tg_indicator: f64,
    pub n_tg_max: f64,
    pub chemical_potential: ChemicalPotentialCheck,
}

/// Ratios below this count as "much less than".
pub const MUCH_LESS: f64 = 0.1;

/// All criteria for `atom_number` atoms on a ring of radius `ring_radius`.
/// `mu` is an optional chemical potential in J.
pub fn gas_criteria(
    species: &AtomSpecies,
    temperature: f64,
    omega_perp: f64,
    ring_radius: f64,
    atom_number: f64,
    mu: Option<f64>,
) -> Result<GasCriteria> {
    for (name, v) in [("omega_perp", omega_perp), ("ring_radius", ring_radius), ("atom_number", atom_number)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, "must be positive"));
        }
    }
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::invalid("temperature", "must be non-negative"));
    }
    let ring_length = 2.0 * PI * ring_radius;
    let density = atom_number / ring_length;
    let lc = correlation_length(density, omega_perp, species);
    let chemical_potential = match mu {
        None => ChemicalPotentialCheck::RequiresExternalInput,
        Some(mu) => {
            let ratio = mu / (HBAR * omega_perp);
            ChemicalPotentialCheck::Evaluated {
                ratio,
                pass: ratio < MUCH_LESS,
            }
        }
    };
    Ok(GasCriteria {
        species: species.name.clone(),
        temperature,
        omega_perp,
        ring_length,
        atom_number,
        density,
        ratio_1d: one_d_ratio(temperature, omega_perp),
        l_c: lc.l_c,
        tg_indicator: lc.tg_indicator,
        n_tg_max: tg_atom_bound(species, omega_perp, ring_length),
        chemical_potential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const W40: f64 = 2.0 * PI * 40e3;

    #[test]
    fn one_d_ratio_examples() {
        let r = one_d_ratio(100e-9, W40);
        assert!((r - 0.052).abs() < 0.001, "{r}");
        assert_eq!(one_d_ratio(0.0, W40), 0.0);
        assert!((one_d_ratio(200e-9, W40) / r - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tg_bound_examples() {
        let rb = AtomSpecies::rb87();
        let l = 2.0 * PI * 20e-6;
        let n = tg_atom_bound(&rb, W40, l);
        assert!(n > 125.0 && n < 500.0, "{n}");
        assert!((tg_atom_bound(&rb, W40, l / 2.0) / n - 0.5).abs() < 1e-14);
        let mut dry = rb.clone();
        dry.a_scatter = 0.0;
        assert_eq!(tg_atom_bound(&dry, W40, l), 0.0);
    }

    #[test]
    fn correlation_length_examples() {
        let rb = AtomSpecies::rb87();
        // 1/n = l_c  ⇔  n = 2 m ω a / ħ
        let n_star = 2.0 * rb.mass * W40 * rb.a_scatter / HBAR;
        let c = correlation_length(n_star, W40, &rb);
        assert!((c.tg_indicator - 1.0).abs() < 1e-12);
        let c4 = correlation_length(4.0 * n_star, W40, &rb);
        assert!((c4.l_c / c.l_c - 0.5).abs() < 1e-14);
        let g = gas_criteria(&rb, 100e-9, W40, 20e-6, 50.0, None).unwrap();
        assert!(g.tg_indicator > 1.0);
        assert_eq!(g.density, 50.0 / g.ring_length);
        assert_eq!(g.chemical_potential, ChemicalPotentialCheck::RequiresExternalInput);
    }

    #[test]
    fn bound_is_crossover_number() {
        // at N = N_tg the spacing equals l_c
        let rb = AtomSpecies::rb87();
        let l = 2.0 * PI * 20e-6;
        let n = tg_atom_bound(&rb, W40, l);
        let c = correlation_length(n / l, W40, &rb);
        assert!((c.tg_indicator - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_check() {
        let rb = AtomSpecies::rb87();
        let mu = 0.01 * HBAR * W40;
        let g = gas_criteria(&rb, 50e-9, W40, 20e-6, 50.0, Some(mu)).unwrap();
        match g.chemical_potential {
            ChemicalPotentialCheck::Evaluated { ratio, pass } => {
                assert!((ratio - 0.01).abs() < 1e-12);
                assert!(pass);
            }
            _ => panic!(),
        }
        assert!(gas_criteria(&rb, 50e-9, -1.0, 20e-6, 50.0, None).is_err());
    }
}
