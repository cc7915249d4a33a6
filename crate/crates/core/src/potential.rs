//! Total atomic potential: mirror repulsion, Stark attraction, optional gravity.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::DiskGeometry;
use crate::interp::{Bicubic, Sample};
use crate::solver::{build_grid, electric_field, solve_laplace_axisym, AxisymGrid, Resolution, SolverSettings};
use crate::species::AtomSpecies;
use crate::units::{EnergyQuantity, BOHR_MAGNETON, STANDARD_GRAVITY};

/// Magnetized mirror: surface field amplitude and stripe period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MirrorSpec {
    /// T
    pub b0_surface: f64,
    /// m
    pub period_a: f64,
}

impl Default for MirrorSpec {
    /// A commercial hard drive: 2 kG at the surface, 3 μm period.
    fn default() -> Self {
        MirrorSpec {
            b0_surface: 0.2,
            period_a: 3e-6,
        }
    }
}

impl MirrorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0_surface.is_finite() && self.b0_surface > 0.0) {
            return Err(Error::invalid("b0_surface", "must be positive"));
        }
        if !(self.period_a.is_finite() && self.period_a > 0.0) {
            return Err(Error::invalid("period_a", "must be positive"));
        }
        Ok(())
    }

    /// Field magnitude at height z.
    pub fn field_at(&self, z: f64) -> f64 {
        self.b0_surface * (-2.0 * PI * z / self.period_a).exp()
    }
}

/// U_mag = m_F g_F μ_B B₀ exp(−2πz/a).
pub fn mirror_potential(z: f64, mirror: &MirrorSpec, species: &AtomSpecies) -> Result<EnergyQuantity> {
    if z < 0.0 {
        return Err(Error::BelowMirror(z));
    }
    Ok(EnergyQuantity(mirror_energy(z, mirror, species)))
}

#[inline]
fn mirror_energy(z: f64, mirror: &MirrorSpec, species: &AtomSpecies) -> f64 {
    species.mf_gf * BOHR_MAGNETON * mirror.field_at(z)
}

/// U_Stark = −½ α V² |E₁|², where |E₁|² is the squared field per applied volt.
pub fn stark_potential(e2_unit: f64, voltage: f64, species: &AtomSpecies) -> EnergyQuantity {
    EnergyQuantity(-0.5 * species.alpha_static * voltage * voltage * e2_unit)
}

/// Unit-voltage electrostatic solution for one geometry, shared by every
/// voltage, species and mirror evaluated on it.
#[derive(Debug, Clone)]
pub struct UnitField {
    pub geometry: DiskGeometry,
    pub grid: AxisymGrid,
    /// Φ per volt.
    pub phi: ScalarField,
    /// |E|² per volt², masked on conductor nodes.
    pub e2: ScalarField,
    /// E_ρ, E_z per volt.
    pub e_rho: Vec<f64>,
    pub e_z: Vec<f64>,
    pub iterations: usize,
    pub scaled_residual: f64,
    e2_interp: Bicubic,
}

impl UnitField {
    pub fn solve(geometry: &DiskGeometry, resolution: Resolution, settings: &SolverSettings) -> Result<Self> {
        let grid = build_grid(geometry, resolution)?;
        let sol = solve_laplace_axisym(geometry, &grid, settings)?;
        Ok(Self::from_phi(geometry, grid, sol.phi, sol.iterations, sol.scaled_residual))
    }

    pub fn from_phi(
        geometry: &DiskGeometry,
        grid: AxisymGrid,
        phi: ScalarField,
        iterations: usize,
        scaled_residual: f64,
    ) -> Self {
        let e = electric_field(&phi);
        let mut e2 = e.magnitude_squared();
        e2.mask = phi.mask.clone();
        let e2_interp = Bicubic::new(grid.n_rho, grid.n_z, [grid.h, grid.h], [0.0, 0.0], &e2.values, true);
        let mut comps = e.components.into_iter();
        let e_rho = comps.next().unwrap();
        let e_z = comps.next().unwrap();
        UnitField {
            geometry: *geometry,
            grid,
            phi,
            e2,
            e_rho,
            e_z,
            iterations,
            scaled_residual,
            e2_interp,
        }
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn rho_max(&self) -> f64 {
        (self.grid.n_rho - 1) as f64 * self.grid.h
    }

    pub fn z_max(&self) -> f64 {
        (self.grid.n_z - 1) as f64 * self.grid.h
    }

    pub fn in_domain(&self, rho: f64, z: f64) -> bool {
        rho >= 0.0 && rho <= self.rho_max() && z >= 0.0 && z <= self.z_max()
    }

    /// Inside the rasterized disk (closed set).
    pub fn inside_conductor(&self, rho: f64, z: f64) -> bool {
        let g = &self.grid;
        let eps = 1e-9 * g.h;
        rho <= g.disk_edge as f64 * g.h + eps
            && z >= g.disk_bottom as f64 * g.h - eps
            && z <= g.disk_top as f64 * g.h + eps
    }

    /// Interpolated |E|² per volt² and its (ρ, z) gradient.
    pub fn e2_at(&self, rho: f64, z: f64) -> Sample {
        self.e2_interp.sample(rho, z)
    }
}

/// A composed trap: unit field, mirror, species and applied voltage.
#[derive(Debug, Clone)]
pub struct TrapSystem {
    pub mirror: MirrorSpec,
    pub species: AtomSpecies,
    pub applied_voltage: f64,
    pub include_gravity: bool,
    pub field: Arc<UnitField>,
}

impl TrapSystem {
    pub fn new(field: Arc<UnitField>, mirror: MirrorSpec, species: AtomSpecies, applied_voltage: f64) -> Self {
        TrapSystem {
            mirror,
            species,
            applied_voltage,
            include_gravity: false,
            field,
        }
    }

    pub fn geometry(&self) -> &DiskGeometry {
        &self.field.geometry
    }

    pub fn with_voltage(&self, v: f64) -> Self {
        TrapSystem {
            applied_voltage: v,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mirror.validate()?;
        self.species.validate()?;
        if !(self.applied_voltage.is_finite() && self.applied_voltage >= 0.0) {
            return Err(Error::invalid("applied_voltage", "must be non-negative"));
        }
        Ok(())
    }

    fn node_potential(&self, e2: f64, z: f64, v: f64) -> f64 {
        let mut u = mirror_energy(z, &self.mirror, &self.species) - 0.5 * self.species.alpha_static * v * v * e2;
        if self.include_gravity {
            u += self.species.mass * STANDARD_GRAVITY * z;
        }
        u
    }

    /// U at (ρ, z) from the interpolant, in J, at the system voltage. No domain checks.
    pub fn potential_rz(&self, rho: f64, z: f64) -> f64 {
        self.node_potential(self.field.e2_at(rho, z).value, z, self.applied_voltage)
    }

    /// U and (∂U/∂ρ, ∂U/∂z) at (ρ, z) for voltage `v`. No domain checks.
    pub fn potential_gradient_rz(&self, rho: f64, z: f64, v: f64) -> (f64, f64, f64) {
        let s = self.field.e2_at(rho, z);
        let stark = 0.5 * self.species.alpha_static * v * v;
        let mag = mirror_energy(z, &self.mirror, &self.species);
        let mut u = mag - stark * s.value;
        let d_rho = -stark * s.d0;
        let mut d_z = -2.0 * PI / self.mirror.period_a * mag - stark * s.d1;
        if self.include_gravity {
            let mg = self.species.mass * STANDARD_GRAVITY;
            u += mg * z;
            d_z += mg;
        }
        (u, d_rho, d_z)
    }

    /// Potential and Cartesian force at a point for an arbitrary voltage.
    pub fn evaluate(&self, point: [f64; 3], v: f64) -> Result<(f64, [f64; 3])> {
        let [x, y, z] = point;
        let rho = x.hypot(y);
        if !self.field.in_domain(rho, z) {
            return Err(Error::OutOfDomain { x, y, z });
        }
        if self.field.inside_conductor(rho, z) {
            return Err(Error::InsideConductor { x, y, z });
        }
        let (u, d_rho, d_z) = self.potential_gradient_rz(rho, z, v);
        let (fx, fy) = if rho > 0.0 {
            (-d_rho * x / rho, -d_rho * y / rho)
        } else {
            (0.0, 0.0)
        };
        Ok((u, [fx, fy, -d_z]))
    }
}

/// U on every node of the solver grid; conductor nodes are masked.
pub fn total_potential_grid(system: &TrapSystem) -> ScalarField {
    let f = &system.field;
    let g = &f.grid;
    let v = system.applied_voltage;
    let mut values = Vec::with_capacity(g.len());
    for i in 0..g.n_rho {
        for k in 0..g.n_z {
            let z = k as f64 * g.h;
            values.push(system.node_potential(f.e2.at(i, k), z, v));
        }
    }
    let mut out = ScalarField::axisymmetric(g.n_rho, g.n_z, g.h, values);
    out.mask = f.e2.mask.clone();
    out
}

/// U and force = −∇U at a Cartesian point for the system voltage.
pub fn potential_and_force_at(system: &TrapSystem, point: [f64; 3]) -> Result<(EnergyQuantity, [f64; 3])> {
    let (u, f) = system.evaluate(point, system.applied_voltage)?;
    Ok((EnergyQuantity(u), f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::species::AtomSpecies;
    use crate::units::PLANCK;

    #[test]
    fn mirror_examples() {
        let cs = AtomSpecies::cs133();
        let m = MirrorSpec::default();
        let u0 = mirror_potential(0.0, &m, &cs).unwrap().joules();
        assert_eq!(u0, 0.75 * BOHR_MAGNETON * 0.2);
        let ua = mirror_potential(m.period_a, &m, &cs).unwrap().joules();
        assert!((ua / u0 - (-2.0 * PI).exp()).abs() < 1e-15);
        assert!(((-2.0 * PI).exp() - 1.867e-3).abs() < 1e-6);
        let u = mirror_potential(2.33e-6, &m, &cs).unwrap().joules() / PLANCK / 1e6;
        assert!((u - 16.0).abs() < 0.5, "{u}");
        assert!(matches!(mirror_potential(-1e-9, &m, &cs), Err(Error::BelowMirror(_))));
    }

    #[test]
    fn stark_examples() {
        let cs = AtomSpecies::cs133();
        assert_eq!(stark_potential(1e12, 0.0, &cs).joules(), 0.0);
        let a = stark_potential(3.0e12, 1.0, &cs).joules();
        let b = stark_potential(3.0e12, 2.0, &cs).joules();
        assert!((b / a - 4.0).abs() < 1e-14);
        assert!(a < 0.0);
        // |E| = 1.8 MV/m
        let u = stark_potential(1.8e6f64.powi(2), 1.0, &cs).joules() / PLANCK / 1e6;
        assert!((u + 16.0).abs() < 0.5, "{u}");
    }

    #[test]
    fn gravity_offset_scale() {
        // m g z / h at 1 μm for Cs ≈ 3.2 kHz
        let cs = AtomSpecies::cs133();
        let khz = cs.mass * STANDARD_GRAVITY * 1e-6 / PLANCK / 1e3;
        assert!((khz - 3.27).abs() < 0.05, "{khz}");
    }
}
