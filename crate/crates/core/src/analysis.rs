//! Trap characterization: minimum, watershed depth, harmonic frequencies,
//! Lamb-Dicke parameters, optimal voltage and trap volume.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::DiskGeometry;
use crate::potential::{total_potential_grid, MirrorSpec, TrapSystem, UnitField};
use crate::solver::{Resolution, SolverSettings};
use crate::species::{recoil_energy, AtomSpecies};
use crate::units::{EnergyQuantity, BOLTZMANN, HBAR};
use crate::watershed::{escape_level, sublevel_component, Surface};

/// Default volume threshold, μK.
pub const VOLUME_THRESHOLD_UK: f64 = 200.0;

/// Default voltage scan range for the depth optimization, V.
pub const DEFAULT_V_RANGE: (f64, f64) = (1.0, 60.0);

/// A located minimum in continuous (ρ, z) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimumLocation {
    pub rho: f64,
    pub z: f64,
    pub u_min: EnergyQuantity,
    /// Grid node the refinement started from.
    pub node: (usize, usize),
}

/// Harmonic frequencies at a minimum, rad/s.
///
/// `omega_r` and `omega_perp` are the curvatures along ρ and along z
/// (perpendicular to the substrate). The normal modes of the (ρ, z) Hessian
/// are tilted from those axes; they are reported separately, with the mode
/// whose eigenvector lies closer to ρ labeled radial. The azimuthal
/// frequency is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequencies {
    pub omega_r: f64,
    pub omega_perp: f64,
    pub omega_azimuthal: f64,
    pub mode_r: f64,
    pub mode_perp: f64,
    /// Angle of the radial eigenvector from the ρ axis, rad.
    pub radial_tilt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapCharacterization {
    pub species: String,
    pub applied_voltage: f64,
    pub min_location: (f64, f64),
    pub u_min: EnergyQuantity,
    pub depth: EnergyQuantity,
    /// Watershed escape level.
    pub escape_level: EnergyQuantity,
    pub omega_r: f64,
    pub omega_perp: f64,
    pub mode_r: f64,
    pub mode_perp: f64,
    pub radial_tilt: f64,
    pub eta_r: f64,
    pub eta_perp: f64,
    #[serde(rename = "B_at_min")]
    pub b_at_min: f64,
    #[serde(rename = "volume_200uK")]
    pub volume_200uk: Option<f64>,
}

impl TrapCharacterization {
    pub fn depth_mhz(&self) -> f64 {
        self.depth.mhz()
    }

    pub fn f_r_khz(&self) -> f64 {
        self.omega_r / (2.0 * PI) / 1e3
    }

    pub fn f_perp_khz(&self) -> f64 {
        self.omega_perp / (2.0 * PI) / 1e3
    }
}

fn neighbor(u: &ScalarField, i: isize, k: usize, axis_mirror: bool) -> Option<usize> {
    let n_rho = u.shape[0] as isize;
    let i = if i < 0 && axis_mirror { -i } else { i };
    if i < 0 || i >= n_rho || k >= u.shape[2] {
        return None;
    }
    let idx = u.index(i as usize, 0, k);
    (!u.is_masked(idx)).then_some(idx)
}

/// Lowest interior local minimum with quadratic sub-grid refinement from a
/// 3×3 stencil. The first axis is treated as an axis of symmetry.
pub fn find_minimum(u: &ScalarField) -> Result<MinimumLocation> {
    let [n0, _, n2] = u.shape;
    if n0 < 3 || n2 < 3 {
        return Err(Error::NoMinimum("grid too small".into()));
    }
    let axis = matches!(u.symmetry, crate::field::Symmetry::Axisymmetric);
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n0 - 1 {
        if i == 0 && !axis {
            continue;
        }
        for k in 1..n2 - 1 {
            let p = u.index(i, 0, k);
            if u.is_masked(p) {
                continue;
            }
            let f = u.values[p];
            let mut ok = true;
            'nb: for di in -1isize..=1 {
                for dk in -1isize..=1 {
                    if di == 0 && dk == 0 {
                        continue;
                    }
                    match neighbor(u, i as isize + di, (k as isize + dk) as usize, axis) {
                        None => {
                            ok = false;
                            break 'nb;
                        }
                        Some(q) => {
                            let g = u.values[q];
                            let face = di == 0 || dk == 0;
                            if (face && g <= f) || g < f {
                                ok = false;
                                break 'nb;
                            }
                        }
                    }
                }
            }
            if ok && best.is_none_or(|b| f < b.2) {
                best = Some((i, k, f));
            }
        }
    }
    let (i, k, f) = best.ok_or_else(|| Error::NoMinimum("no interior local minimum".into()))?;
    let at = |di: isize, dk: isize| {
        let q = neighbor(u, i as isize + di, (k as isize + dk) as usize, axis).expect("checked");
        u.values[q]
    };
    let g = [(at(1, 0) - at(-1, 0)) / 2.0, (at(0, 1) - at(0, -1)) / 2.0];
    let a = at(1, 0) - 2.0 * f + at(-1, 0);
    let c = at(0, 1) - 2.0 * f + at(0, -1);
    let b = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / 4.0;
    let det = a * c - b * b;
    let mut delta = [0.0, 0.0];
    if det > 0.0 && a > 0.0 {
        delta = [-(c * g[0] - b * g[1]) / det, -(a * g[1] - b * g[0]) / det];
        if delta[0].abs() > 1.0 || delta[1].abs() > 1.0 {
            delta = [0.0, 0.0];
        }
    }
    let fit = f + g[0] * delta[0] + g[1] * delta[1]
        + 0.5 * (a * delta[0] * delta[0] + 2.0 * b * delta[0] * delta[1] + c * delta[1] * delta[1]);
    let rho = u.origin[0] + (i as f64 + delta[0]) * u.spacing[0];
    Ok(MinimumLocation {
        rho: if axis { rho.abs() } else { rho },
        z: u.origin[2] + (k as f64 + delta[1]) * u.spacing[2],
        u_min: EnergyQuantity(fit.min(f)),
        node: (i, k),
    })
}

/// Escape sinks for an axisymmetric potential grid: the outer domain faces
/// (mirror plane, top, far radius) and every open node touching a conductor.
pub fn escape_sinks(u: &ScalarField) -> Vec<bool> {
    let [n0, _, n2] = u.shape;
    let mut sink = vec![false; u.len()];
    for i in 0..n0 {
        for k in 0..n2 {
            let p = u.index(i, 0, k);
            if u.is_masked(p) {
                continue;
            }
            let edge = k == 0 || k == n2 - 1 || i == n0 - 1;
            let touches = [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dk)| {
                let (a, b) = (i as isize + di, k as isize + dk);
                a >= 0 && b >= 0 && (a as usize) < n0 && (b as usize) < n2 && u.is_masked(u.index(a as usize, 0, b as usize))
            });
            sink[p] = edge || touches;
        }
    }
    sink
}

fn blocked_of(u: &ScalarField) -> Vec<bool> {
    u.mask.clone().unwrap_or_else(|| vec![false; u.len()])
}

/// Watershed escape level of the minimum's basin, J.
pub fn escape_energy(u: &ScalarField, min: &MinimumLocation) -> Result<f64> {
    let blocked = blocked_of(u);
    let sink = escape_sinks(u);
    escape_with(u, &blocked, &sink, min)
}

fn escape_with(u: &ScalarField, blocked: &[bool], sink: &[bool], min: &MinimumLocation) -> Result<f64> {
    let surface = Surface {
        n0: u.shape[0],
        n1: u.shape[2],
        values: &u.values,
        blocked,
        sink,
    };
    let start = u.index(min.node.0, 0, min.node.1);
    escape_level(&surface, start).ok_or_else(|| Error::NoMinimum("basin has no escape route".into()))
}

/// Depth = U_escape − U_min, where U_escape is the lowest level at which the
/// minimum's sublevel basin reaches a sink.
pub fn trap_depth(u: &ScalarField, min: &MinimumLocation) -> Result<EnergyQuantity> {
    let esc = escape_energy(u, min)?;
    Ok(EnergyQuantity((esc - min.u_min.joules()).max(0.0)))
}

/// Symmetric 2×2 Hessian of `f` at (x, y) by central differences with
/// step `h` and one Richardson halving.
pub fn richardson_hessian(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> [f64; 3] {
    let d = |s: f64| {
        let f0 = f(x, y);
        let fxx = (f(x + s, y) - 2.0 * f0 + f(x - s, y)) / (s * s);
        let fyy = (f(x, y + s) - 2.0 * f0 + f(x, y - s)) / (s * s);
        let fxy = (f(x + s, y + s) - f(x + s, y - s) - f(x - s, y + s) + f(x - s, y - s)) / (4.0 * s * s);
        [fxx, fxy, fyy]
    };
    let coarse = d(h);
    let fine = d(h / 2.0);
    [0, 1, 2].map(|j| (4.0 * fine[j] - coarse[j]) / 3.0)
}

/// Frequencies from a (ρ, z) Hessian [a, b, c]: directional curvatures and
/// eigen-decomposed normal modes.
pub fn frequencies_from_hessian(hess: [f64; 3], mass: f64) -> Result<Frequencies> {
    let [a, b, c] = hess;
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (hi, lo) = (mean + rad, mean - rad);
    if !(lo > 0.0) {
        return Err(Error::NonPositiveCurvature(lo, hi));
    }
    // eigenvector of `hi` is (cos θ, sin θ)
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (k_r, k_perp, tilt) = if theta.cos().abs() >= theta.sin().abs() {
        (hi, lo, theta)
    } else {
        let t = theta - theta.signum() * PI / 2.0;
        (lo, hi, t)
    };
    Ok(Frequencies {
        omega_r: (a / mass).sqrt(),
        omega_perp: (c / mass).sqrt(),
        omega_azimuthal: 0.0,
        mode_r: (k_r / mass).sqrt(),
        mode_perp: (k_perp / mass).sqrt(),
        radial_tilt: tilt,
    })
}

/// Harmonic frequencies at (ρ₀, z₀) from the interpolated potential.
pub fn trap_frequencies(system: &TrapSystem, rho0: f64, z0: f64) -> Result<Frequencies> {
    let step = 2.0 * system.field.h();
    let f = |r: f64, z: f64| system.potential_rz(r.abs(), z);
    let h = richardson_hessian(&f, rho0, z0, step);
    frequencies_from_hessian(h, system.species.mass)
}

/// η = √(E_recoil / ħω).
pub fn lamb_dicke(omega: f64, species: &AtomSpecies) -> f64 {
    (recoil_energy(species).joules() / (HBAR * omega)).sqrt()
}

/// |B| at height z₀ above the mirror, T.
pub fn field_magnitude_at_min(z0: f64, mirror: &MirrorSpec) -> f64 {
    mirror.field_at(z0)
}

/// Volume of revolution of the basin nodes lying at least `threshold`
/// below the escape level, m³.
pub fn trap_volume(u: &ScalarField, min: &MinimumLocation, threshold: EnergyQuantity) -> Result<f64> {
    let esc = escape_energy(u, min)?;
    volume_below(u, min, esc, threshold)
}

fn volume_below(u: &ScalarField, min: &MinimumLocation, esc: f64, threshold: EnergyQuantity) -> Result<f64> {
    let depth = esc - min.u_min.joules();
    if threshold.joules() > depth {
        return Err(Error::ThresholdExceedsDepth {
            threshold: threshold.joules(),
            depth,
        });
    }
    let blocked = blocked_of(u);
    let sink = vec![false; u.len()];
    let surface = Surface {
        n0: u.shape[0],
        n1: u.shape[2],
        values: &u.values,
        blocked: &blocked,
        sink: &sink,
    };
    let start = u.index(min.node.0, 0, min.node.1);
    let (h0, h2) = (u.spacing[0], u.spacing[2]);
    let vol = sublevel_component(&surface, start, esc - threshold.joules())
        .into_iter()
        .map(|p| {
            let i = p / u.shape[2];
            if i == 0 {
                PI * (h0 / 2.0).powi(2) * h2
            } else {
                2.0 * PI * i as f64 * h0 * h0 * h2
            }
        })
        .sum();
    Ok(vol)
}

/// Newton iterations on the interpolant starting from a grid-refined point.
fn refine_on_interpolant(system: &TrapSystem, rho: f64, z: f64) -> (f64, f64) {
    let h = system.field.h();
    let v = system.applied_voltage;
    let grad = |r: f64, z: f64| {
        let (_, dr, dz) = system.potential_gradient_rz(r.abs(), z, v);
        (if r < 0.0 { -dr } else { dr }, dz)
    };
    let (mut r, mut zz) = (rho, z);
    let s = 0.25 * h;
    for _ in 0..20 {
        let (gr, gz) = grad(r, zz);
        let (grp, gzp) = grad(r + s, zz);
        let (grm, gzm) = grad(r - s, zz);
        let (grq, gzq) = grad(r, zz + s);
        let (grn, gzn) = grad(r, zz - s);
        let a = (grp - grm) / (2.0 * s);
        let c = (gzq - gzn) / (2.0 * s);
        let b = 0.5 * ((gzp - gzm) / (2.0 * s) + (grq - grn) / (2.0 * s));
        let det = a * c - b * b;
        if !(det > 0.0 && a > 0.0) {
            break;
        }
        let dr = -(c * gr - b * gz) / det;
        let dz = -(a * gz - b * gr) / det;
        if dr.abs() > h || dz.abs() > h {
            break;
        }
        r += dr;
        zz += dz;
        if dr.abs().max(dz.abs()) < 1e-7 * h {
            break;
        }
    }
    if (r - rho).abs() > 1.5 * h || (zz - z).abs() > 1.5 * h {
        return (rho, z);
    }
    (r.abs(), zz)
}

/// Reusable depth evaluation on one unit field for one species and mirror.
pub struct DepthScanner {
    system: TrapSystem,
    mirror_row: Vec<f64>,
    blocked: Vec<bool>,
    sink: Vec<bool>,
    work: ScalarField,
}

impl DepthScanner {
    pub fn new(system: &TrapSystem) -> Self {
        let work = total_potential_grid(&system.with_voltage(0.0));
        let n_z = work.shape[2];
        let mirror_row = (0..n_z).map(|k| work.values[k]).collect();
        let blocked = blocked_of(&work);
        let sink = escape_sinks(&work);
        DepthScanner {
            system: system.clone(),
            mirror_row,
            blocked,
            sink,
            work,
        }
    }

    fn compose(&mut self, v: f64) {
        let n_z = self.work.shape[2];
        let stark = 0.5 * self.system.species.alpha_static * v * v;
        let e2 = &self.system.field.e2.values;
        for (p, u) in self.work.values.iter_mut().enumerate() {
            *u = self.mirror_row[p % n_z] - stark * e2[p];
        }
    }

    /// Potential grid at voltage `v`.
    pub fn grid(&mut self, v: f64) -> &ScalarField {
        self.compose(v);
        &self.work
    }

    /// Watershed depth (J) and minimum at voltage `v`; zero depth when no
    /// trap forms.
    pub fn depth(&mut self, v: f64) -> (f64, Option<MinimumLocation>) {
        self.compose(v);
        let Ok(min) = find_minimum(&self.work) else {
            return (0.0, None);
        };
        match escape_with(&self.work, &self.blocked, &self.sink, &min) {
            Ok(esc) => ((esc - min.u_min.joules()).max(0.0), Some(min)),
            Err(_) => (0.0, None),
        }
    }

    pub fn escape(&mut self, v: f64, min: &MinimumLocation) -> Result<f64> {
        self.compose(v);
        escape_with(&self.work, &self.blocked, &self.sink, min)
    }
}

/// Result of the voltage optimization, including the coarse scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageOptimum {
    pub v_star: f64,
    pub depth: EnergyQuantity,
    /// (V, depth in J) at each coarse scan point.
    pub scan: Vec<(f64, f64)>,
}

/// Scan step of the coarse voltage search, V.
const SCAN_STEP: f64 = 1.0;

/// Depth-maximizing voltage: coarse scan over `range`, then golden-section
/// search on the bracket around the best scan point.
pub fn optimize_voltage(system: &TrapSystem, range: (f64, f64)) -> Result<VoltageOptimum> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("voltage_range", "need 0 < lo < hi"));
    }
    let mut scanner = DepthScanner::new(system);
    let n = ((hi - lo) / SCAN_STEP).round().max(2.0) as usize;
    let step = (hi - lo) / n as f64;
    let scan: Vec<(f64, f64)> = (0..=n)
        .map(|j| {
            let v = lo + j as f64 * step;
            (v, scanner.depth(v).0)
        })
        .collect();
    let (jbest, &(_, dbest)) = scan
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty scan");
    if dbest <= 0.0 {
        return Err(Error::NoTrapInRange { lo, hi });
    }
    let mut a = scan[jbest.saturating_sub(1)].0;
    let mut b = scan[(jbest + 1).min(n)].0;
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = scanner.depth(x1).0;
    let mut f2 = scanner.depth(x2).0;
    while b - a > 1e-3 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = scanner.depth(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = scanner.depth(x2).0;
        }
    }
    let (mut v_star, mut depth) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if dbest > depth {
        v_star = scan[jbest].0;
        depth = dbest;
    }
    Ok(VoltageOptimum {
        v_star,
        depth: EnergyQuantity(depth),
        scan,
    })
}

/// V* and the characterization there.
pub fn optimal_voltage(system: &TrapSystem) -> Result<(f64, TrapCharacterization)> {
    let opt = optimize_voltage(system, DEFAULT_V_RANGE)?;
    let c = characterize_system(&system.with_voltage(opt.v_star))?;
    Ok((opt.v_star, c))
}

/// Characterizes a composed system at its applied voltage.
pub fn characterize_system(system: &TrapSystem) -> Result<TrapCharacterization> {
    system.validate()?;
    let u = total_potential_grid(system);
    let grid_min = find_minimum(&u)?;
    let esc = escape_energy(&u, &grid_min)?;
    let (rho, z) = refine_on_interpolant(system, grid_min.rho, grid_min.z);
    let u_min = system.potential_rz(rho, z).min(grid_min.u_min.joules());
    let min = MinimumLocation {
        rho,
        z,
        u_min: EnergyQuantity(u_min),
        node: grid_min.node,
    };
    let depth = (esc - u_min).max(0.0);
    let freq = trap_frequencies(system, rho, z)?;
    let threshold = EnergyQuantity::from_microkelvin(VOLUME_THRESHOLD_UK);
    let volume = volume_below(&u, &min, esc, threshold).ok();
    Ok(TrapCharacterization {
        species: system.species.name.clone(),
        applied_voltage: system.applied_voltage,
        min_location: (rho, z),
        u_min: min.u_min,
        depth: EnergyQuantity(depth),
        escape_level: EnergyQuantity(esc),
        omega_r: freq.omega_r,
        omega_perp: freq.omega_perp,
        mode_r: freq.mode_r,
        mode_perp: freq.mode_perp,
        radial_tilt: freq.radial_tilt,
        eta_r: lamb_dicke(freq.omega_r, &system.species),
        eta_perp: lamb_dicke(freq.omega_perp, &system.species),
        b_at_min: field_magnitude_at_min(z, &system.mirror),
        volume_200uk: volume,
    })
}

/// Solves the geometry and characterizes it; with `voltage` omitted the
/// depth-maximizing voltage is used.
pub fn characterize(
    geometry: &DiskGeometry,
    resolution: Resolution,
    settings: &SolverSettings,
    mirror: MirrorSpec,
    species: &AtomSpecies,
    voltage: Option<f64>,
) -> Result<TrapCharacterization> {
    let field = Arc::new(UnitField::solve(geometry, resolution, settings)?);
    characterize_field(field, mirror, species, voltage)
}

/// Characterization on an already solved unit field.
pub fn characterize_field(
    field: Arc<UnitField>,
    mirror: MirrorSpec,
    species: &AtomSpecies,
    voltage: Option<f64>,
) -> Result<TrapCharacterization> {
    let system = TrapSystem::new(field, mirror, species.clone(), voltage.unwrap_or(0.0));
    match voltage {
        Some(_) => characterize_system(&system),
        None => Ok(optimal_voltage(&system)?.1),
    }
}

/// Thermal energy k_B·T, J.
pub fn thermal_energy(t: f64) -> EnergyQuantity {
    EnergyQuantity(BOLTZMANN * t)
}
