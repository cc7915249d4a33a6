//! Cartesian 3D Laplace solves and the azimuthal perturbation of the ring
//! trap by the lead, stem and compensation pad.
//!
//! The lead runs from the stem at the disk center along −x. Two kinds of
//! solve are provided:
//!
//! * [`solve_laplace_3d`] solves the full half-space domain directly. The
//!   plane y = 0 is a symmetry plane of every conductor, so only y ≥ 0 is
//!   stored with a Neumann face there. This is exact but costly and is meant
//!   for small geometries.
//! * [`LeadPerturbation`] writes Φ = Φ_axisym + δΦ and solves only for δΦ in
//!   a box around the point where the lead leaves the disk. δΦ vanishes on
//!   the disk and mirror and is sourced by the lead, stem and pad.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{find_minimum, TrapCharacterization};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::DiskGeometry;
use crate::interp::Bicubic;
use crate::potential::{MirrorSpec, UnitField};
use crate::species::AtomSpecies;
use crate::units::BOHR_MAGNETON;

/// Default node cap for one 3D grid.
pub const DEFAULT_NODE_CAP: usize = 200_000_000;

/// Cells required between the mirror and the lead top.
pub const MIN_LEAD_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    /// Fixed value (0 unless a conductor touches the face).
    Dirichlet,
    /// Zero normal derivative.
    Neumann,
}

/// A uniform Cartesian box of nodes; `faces[axis] = [low, high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub origin: [f64; 3],
    pub h: f64,
    pub shape: [usize; 3],
    pub faces: [[Face; 2]; 3],
}

impl Box3 {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    pub fn coord(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        ]
    }

    fn coarsened(&self) -> Option<Box3> {
        if self.shape.iter().all(|&n| (n - 1) % 2 == 0 && (n - 1) / 2 >= 4) {
            Some(Box3 {
                shape: self.shape.map(|n| (n - 1) / 2 + 1),
                h: 2.0 * self.h,
                ..*self
            })
        } else {
            None
        }
    }

    fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (self.shape[a] - 1) as f64 * self.h)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver3dSettings {
    /// Bound on max |Σ neighbours − 6Φ| over free nodes.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub node_cap: usize,
    /// Warm-start from a grid coarsened by 2.
    pub multilevel: bool,
}

impl Default for Solver3dSettings {
    fn default() -> Self {
        Solver3dSettings {
            tolerance: 1e-9,
            max_iterations: 100_000,
            node_cap: DEFAULT_NODE_CAP,
            multilevel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution3 {
    pub region: Box3,
    /// Cartesian Φ; conductor nodes are masked.
    pub phi: ScalarField,
    pub iterations: usize,
    pub scaled_residual: f64,
}

/// Conductor lookup: `Some(value)` for a node held at a fixed potential.
pub type Conductors<'a> = &'a dyn Fn([f64; 3]) -> Option<f64>;

/// Solves Laplace's equation in `region` with the given conductors.
pub fn solve_box(region: &Box3, conductors: Conductors, settings: &Solver3dSettings) -> Result<Solution3> {
    if region.shape.iter().any(|&n| n < 3) {
        return Err(Error::invalid("shape", "every axis needs at least 3 nodes"));
    }
    if region.len() > settings.node_cap {
        return Err(Error::MemoryBudget {
            nodes: region.len(),
            cap: settings.node_cap,
        });
    }
    let (values, fixed, conductor, iterations, res) = solve_level(region, conductors, settings)?;
    drop(fixed);
    let phi = ScalarField::cartesian(region.shape, [region.h; 3], region.origin, values).with_mask(conductor);
    Ok(Solution3 {
        region: *region,
        phi,
        iterations,
        scaled_residual: res,
    })
}

type Level = (Vec<f64>, Vec<bool>, Vec<bool>, usize, f64);

fn solve_level(region: &Box3, conductors: Conductors, settings: &Solver3dSettings) -> Result<Level> {
    let n = region.len();
    let mut values = vec![0.0; n];
    if settings.multilevel && n >= 200_000 {
        if let Some(coarse) = region.coarsened() {
            let loose = Solver3dSettings {
                tolerance: (settings.tolerance * 100.0).max(1e-8),
                ..*settings
            };
            let (cv, ..) = solve_level(&coarse, conductors, &loose)?;
            prolong(&coarse, &cv, region, &mut values);
        }
    }
    let mut fixed = vec![false; n];
    let mut conductor = vec![false; n];
    let [n0, n1, n2] = region.shape;
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                let p = region.index(i, j, k);
                let c = conductors(region.coord(i, j, k));
                let on_face = [(0, i, n0), (1, j, n1), (2, k, n2)].iter().any(|&(a, idx, len)| {
                    (idx == 0 && region.faces[a][0] == Face::Dirichlet)
                        || (idx == len - 1 && region.faces[a][1] == Face::Dirichlet)
                });
                if let Some(v) = c {
                    fixed[p] = true;
                    conductor[p] = true;
                    values[p] = v;
                } else if on_face {
                    fixed[p] = true;
                    values[p] = 0.0;
                }
            }
        }
    }
    let sor = Sor3::new(region, &fixed);
    let (it, res) = sor.run(&mut values, settings.tolerance, settings.max_iterations)?;
    Ok((values, fixed, conductor, it, res))
}

fn prolong(coarse: &Box3, cv: &[f64], fine: &Box3, out: &mut [f64]) {
    let [n0, n1, n2] = fine.shape;
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                let f = [i as f64 / 2.0, j as f64 / 2.0, k as f64 / 2.0];
                out[fine.index(i, j, k)] = trilinear_idx(coarse, cv, f);
            }
        }
    }
}

/// Trilinear sample at fractional node indices, clamped into the box.
fn trilinear_idx(b: &Box3, v: &[f64], f: [f64; 3]) -> f64 {
    let mut base = [0usize; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        let n = b.shape[a];
        let x = f[a].clamp(0.0, (n - 1) as f64);
        base[a] = (x.floor() as usize).min(n - 2);
        t[a] = x - base[a] as f64;
    }
    let mut acc = 0.0;
    for (di, wi) in [(0, 1.0 - t[0]), (1, t[0])] {
        for (dj, wj) in [(0, 1.0 - t[1]), (1, t[1])] {
            for (dk, wk) in [(0, 1.0 - t[2]), (1, t[2])] {
                let w = wi * wj * wk;
                if w != 0.0 {
                    acc += w * v[b.index(base[0] + di, base[1] + dj, base[2] + dk)];
                }
            }
        }
    }
    acc
}

/// Red-black SOR with Neumann faces folded into the neighbour tables.
struct Sor3<'a> {
    shape: [usize; 3],
    fixed: &'a [bool],
    nb: [Vec<(usize, usize)>; 3],
    rho_jacobi: f64,
}

impl<'a> Sor3<'a> {
    fn new(region: &Box3, fixed: &'a [bool]) -> Self {
        let nb = [0, 1, 2].map(|a| {
            let n = region.shape[a];
            (0..n)
                .map(|i| {
                    let lo = if i == 0 { 1 } else { i - 1 };
                    let hi = if i == n - 1 { n - 2 } else { i + 1 };
                    (lo, hi)
                })
                .collect::<Vec<_>>()
        });
        // Lowest mode per axis: Dirichlet–Dirichlet spans n−1 cells, a
        // Neumann face doubles the effective length, two Neumann faces leave
        // the axis to the conductors.
        let mut acc = 0.0;
        for a in 0..3 {
            let cells = (region.shape[a] - 1) as f64;
            let c = match region.faces[a] {
                [Face::Dirichlet, Face::Dirichlet] => (PI / cells).cos(),
                [Face::Neumann, Face::Neumann] => (PI / (4.0 * cells)).cos(),
                _ => (PI / (2.0 * cells)).cos(),
            };
            acc += c;
        }
        Sor3 {
            shape: region.shape,
            fixed,
            nb,
            rho_jacobi: acc / 3.0,
        }
    }

    fn sweep(&self, phi: &mut [f64], color: usize, omega: f64) {
        let [n0, n1, n2] = self.shape;
        let w = omega / 6.0;
        for i in 0..n0 {
            let (im, ip) = self.nb[0][i];
            for j in 0..n1 {
                let (jm, jp) = self.nb[1][j];
                let base = (i * n1 + j) * n2;
                let xm = (im * n1 + j) * n2;
                let xp = (ip * n1 + j) * n2;
                let ym = (i * n1 + jm) * n2;
                let yp = (i * n1 + jp) * n2;
                let mut k = (i + j + color) % 2;
                while k < n2 {
                    let p = base + k;
                    if !self.fixed[p] {
                        let (km, kp) = self.nb[2][k];
                        let s = phi[xm + k] + phi[xp + k] + phi[ym + k] + phi[yp + k] + phi[base + km] + phi[base + kp];
                        phi[p] += w * (s - 6.0 * phi[p]);
                    }
                    k += 2;
                }
            }
        }
    }

    fn residual(&self, phi: &[f64]) -> f64 {
        let [n0, n1, n2] = self.shape;
        let mut worst = 0.0f64;
        for i in 0..n0 {
            let (im, ip) = self.nb[0][i];
            for j in 0..n1 {
                let (jm, jp) = self.nb[1][j];
                let base = (i * n1 + j) * n2;
                for k in 0..n2 {
                    let p = base + k;
                    if self.fixed[p] {
                        continue;
                    }
                    let (km, kp) = self.nb[2][k];
                    let s = phi[(im * n1 + j) * n2 + k]
                        + phi[(ip * n1 + j) * n2 + k]
                        + phi[(i * n1 + jm) * n2 + k]
                        + phi[(i * n1 + jp) * n2 + k]
                        + phi[base + km]
                        + phi[base + kp];
                    worst = worst.max((s - 6.0 * phi[p]).abs());
                }
            }
        }
        worst
    }

    fn run(&self, phi: &mut [f64], tolerance: f64, max_iterations: usize) -> Result<(usize, f64)> {
        const CHECK_EVERY: usize = 20;
        let rj2 = self.rho_jacobi * self.rho_jacobi;
        let mut omega = 1.0;
        let mut res = self.residual(phi);
        if res < tolerance {
            return Ok((0, res));
        }
        for it in 1..=max_iterations {
            for color in 0..2 {
                self.sweep(phi, color, omega);
                omega = if it == 1 && color == 0 {
                    1.0 / (1.0 - 0.5 * rj2)
                } else {
                    1.0 / (1.0 - 0.25 * rj2 * omega)
                };
            }
            if it % CHECK_EVERY == 0 || it == max_iterations {
                res = self.residual(phi);
                if res < tolerance {
                    return Ok((it, res));
                }
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iterations,
            residual: res,
            tolerance,
        })
    }
}

/// Conductor parts of the 3D geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Disk,
    Stem,
    Lead,
    Pad,
}

/// Which conductor, if any, contains point `p` (closed sets, tolerance `eps`).
pub fn classify(g: &DiskGeometry, p: [f64; 3], eps: f64) -> Option<Part> {
    let [x, y, z] = p;
    let rr = x * x + y * y;
    let d = g.disk_height;
    if rr <= (g.disk_radius + eps).powi(2) && z >= d - eps && z <= d + g.disk_thickness + eps {
        return Some(Part::Disk);
    }
    if !g.has_lead() {
        return None;
    }
    let top = g.lead_height;
    if rr <= (g.stem_radius + eps).powi(2) && z >= top - eps && z <= d + eps {
        return Some(Part::Stem);
    }
    if x <= eps && y.abs() <= 0.5 * g.lead_width + eps && z >= top - g.lead_thickness - eps && z <= top + eps {
        return Some(Part::Lead);
    }
    if let Some(pad) = g.comp_pad {
        let bottom = top + pad.gap_above_lead;
        let clear = g.stem_radius + pad.gap_above_lead;
        if x <= eps
            && rr > clear * clear
            && y.abs() <= 0.5 * pad.width + eps
            && z >= bottom - eps
            && z <= bottom + pad.thickness + eps
        {
            return Some(Part::Pad);
        }
    }
    None
}

fn check_lead_resolution(g: &DiskGeometry, h: f64) -> Result<()> {
    if g.has_lead() {
        let cells = (g.lead_height / h + 1e-6).floor() as usize;
        if cells < MIN_LEAD_CELLS {
            return Err(Error::ResolutionTooCoarse {
                between: "mirror and lead top",
                cells,
                required: MIN_LEAD_CELLS,
            });
        }
    }
    let gap = (g.disk_height / h + 1e-6).floor() as usize;
    if gap < MIN_LEAD_CELLS {
        return Err(Error::ResolutionTooCoarse {
            between: "mirror and disk",
            cells: gap,
            required: MIN_LEAD_CELLS,
        });
    }
    Ok(())
}

fn cells_for(extent: f64, h: f64) -> usize {
    // multiple of 4 so two coarsening levels exist
    let c = (extent / h).round().max(8.0) as usize;
    c.div_ceil(4) * 4
}

/// Direct solve over the whole domain (x ∈ [−R, R], y ∈ [0, R], z ∈ [0, H])
/// with the disk, stem and lead at `disk_voltage` and the pad at its own
/// voltage.
pub fn solve_laplace_3d(
    geometry: &DiskGeometry,
    spacing: f64,
    disk_voltage: f64,
    settings: &Solver3dSettings,
) -> Result<Solution3> {
    geometry.validate()?;
    check_lead_resolution(geometry, spacing)?;
    // the axisymmetric grid rounds the disk up to whole cells; do the same
    let mut snapped = *geometry;
    snapped.disk_thickness = (geometry.disk_thickness / spacing - 1e-6).ceil().max(1.0) * spacing;
    let geometry = &snapped;
    let cx = cells_for(geometry.domain_radius, spacing);
    let cz = cells_for(geometry.domain_height, spacing);
    let region = Box3 {
        origin: [-(cx as f64) * spacing, 0.0, 0.0],
        h: spacing,
        shape: [2 * cx + 1, cx + 1, cz + 1],
        faces: [
            [Face::Dirichlet, Face::Dirichlet],
            [Face::Neumann, Face::Dirichlet],
            [Face::Dirichlet, Face::Dirichlet],
        ],
    };
    if region.len() > settings.node_cap {
        return Err(Error::MemoryBudget {
            nodes: region.len(),
            cap: settings.node_cap,
        });
    }
    let eps = 1e-6 * spacing;
    let pad_v = geometry.comp_pad.map(|p| p.voltage).unwrap_or(0.0);
    let conductors = |p: [f64; 3]| {
        classify(geometry, p, eps).map(|part| match part {
            Part::Pad => pad_v,
            _ => disk_voltage,
        })
    };
    solve_box(&region, &conductors, settings)
}

/// Box and solver settings for the lead perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSettings {
    /// Grid spacing, m.
    pub spacing: f64,
    /// Box extent along the lead beyond the disk edge, m.
    pub outside: f64,
    /// Box extent from the disk edge toward the center, m.
    pub inside: f64,
    /// Box extent across the lead (from the symmetry plane), m.
    pub half_width: f64,
    /// Box height above the mirror, m.
    pub height: f64,
    pub solver: Solver3dSettings,
}

impl Default for PerturbationSettings {
    fn default() -> Self {
        PerturbationSettings {
            spacing: 50e-9,
            outside: 8e-6,
            inside: 4e-6,
            half_width: 10e-6,
            height: 10e-6,
            solver: Solver3dSettings::default(),
        }
    }
}

/// δΦ around the lead exit, for unit disk voltage and unit pad voltage.
#[derive(Debug, Clone)]
pub struct LeadPerturbation {
    pub field2d: Arc<UnitField>,
    pub region: Box3,
    /// δΦ per volt on disk, stem and lead, with the pad grounded.
    pub delta_phi: ScalarField,
    /// Φ per volt on the pad with every other conductor grounded.
    pub pad_phi: Option<ScalarField>,
    pub iterations: Vec<usize>,
    /// Change of |E₁|² relative to the axisymmetric field.
    d11: Vec<f64>,
    /// E₁·E₂ and |E₂|².
    e12: Vec<f64>,
    e22: Vec<f64>,
    phi2d: Bicubic,
}

impl LeadPerturbation {
    pub fn solve(field2d: Arc<UnitField>, settings: &PerturbationSettings) -> Result<Self> {
        let g = field2d.geometry;
        let h = settings.spacing;
        check_lead_resolution(&g, h)?;
        let r = g.disk_radius;
        let cx = cells_for(settings.outside + settings.inside, h);
        let cy = cells_for(settings.half_width, h);
        let cz = cells_for(settings.height, h);
        let x0 = (((-r - settings.outside) / h).round()) * h;
        let region = Box3 {
            origin: [x0, 0.0, 0.0],
            h,
            shape: [cx + 1, cy + 1, cz + 1],
            faces: [
                [Face::Neumann, Face::Neumann],
                [Face::Neumann, Face::Dirichlet],
                [Face::Dirichlet, Face::Dirichlet],
            ],
        };
        if region.len() > settings.solver.node_cap {
            return Err(Error::MemoryBudget {
                nodes: region.len(),
                cap: settings.solver.node_cap,
            });
        }
        let g2 = field2d.grid;
        let phi2d = Bicubic::new(g2.n_rho, g2.n_z, [g2.h, g2.h], [0.0, 0.0], &field2d.phi.values, true);
        let erho = Bicubic::new(g2.n_rho, g2.n_z, [g2.h, g2.h], [0.0, 0.0], &field2d.e_rho, true);
        let ez = Bicubic::new(g2.n_rho, g2.n_z, [g2.h, g2.h], [0.0, 0.0], &field2d.e_z, true);
        let eps = 1e-6 * h;
        let phi_axi = |p: [f64; 3]| phi2d.sample(p[0].hypot(p[1]), p[2]).value;
        let unit = |p: [f64; 3]| {
            classify(&g, p, eps).map(|part| match part {
                Part::Disk => 0.0,
                Part::Stem | Part::Lead => 1.0 - phi_axi(p),
                Part::Pad => -phi_axi(p),
            })
        };
        let s1 = solve_box(&region, &unit, &settings.solver)?;
        let mut iterations = vec![s1.iterations];
        let pad_sol = if g.comp_pad.is_some() {
            let pad = |p: [f64; 3]| classify(&g, p, eps).map(|part| if part == Part::Pad { 1.0 } else { 0.0 });
            let s2 = solve_box(&region, &pad, &settings.solver)?;
            iterations.push(s2.iterations);
            Some(s2.phi)
        } else {
            None
        };

        let n = region.len();
        let mut d11 = vec![0.0; n];
        let pad_len = if pad_sol.is_some() { n } else { 0 };
        let mut e12 = vec![0.0; pad_len];
        let mut e22 = vec![0.0; pad_len];
        let [n0, n1, n2] = region.shape;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let p = region.index(i, j, k);
                    let [x, y, z] = region.coord(i, j, k);
                    let rho = x.hypot(y);
                    let (er, ezv) = (erho.sample(rho, z).value, ez.sample(rho, z).value);
                    let (cx_, cy_) = if rho > 0.0 { (x / rho, y / rho) } else { (0.0, 0.0) };
                    let e2d = [er * cx_, er * cy_, ezv];
                    let gd = gradient(&region, &s1.phi.values, i, j, k);
                    // E₁ = E₂D − ∇δΦ
                    let cross = e2d[0] * gd[0] + e2d[1] * gd[1] + e2d[2] * gd[2];
                    let gg = gd[0] * gd[0] + gd[1] * gd[1] + gd[2] * gd[2];
                    d11[p] = -2.0 * cross + gg;
                    if let Some(phi2) = &pad_sol {
                        let g2v = gradient(&region, &phi2.values, i, j, k);
                        let e1 = [e2d[0] - gd[0], e2d[1] - gd[1], e2d[2] - gd[2]];
                        e12[p] = -(e1[0] * g2v[0] + e1[1] * g2v[1] + e1[2] * g2v[2]);
                        e22[p] = g2v[0] * g2v[0] + g2v[1] * g2v[1] + g2v[2] * g2v[2];
                    }
                }
            }
        }
        Ok(LeadPerturbation {
            field2d,
            region,
            delta_phi: s1.phi,
            pad_phi: pad_sol,
            iterations,
            d11,
            e12,
            e22,
            phi2d,
        })
    }

    pub fn has_pad(&self) -> bool {
        self.pad_phi.is_some()
    }

    fn in_box(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let q = [p[0], p[1].abs(), p[2]];
        self.region.contains(q).then_some(q)
    }

    /// |E|² at `p` for disk voltage `v` and pad voltage `v_pad`, V²/m².
    pub fn e2_at(&self, p: [f64; 3], v: f64, v_pad: f64) -> f64 {
        let rho = p[0].hypot(p[1]);
        let base = self.field2d.e2_at(rho, p[2]).value;
        let Some(q) = self.in_box(p) else {
            return v * v * base;
        };
        let b = &self.region;
        let f = [0, 1, 2].map(|a| (q[a] - b.origin[a]) / b.h);
        let mut e2 = v * v * (base + trilinear_idx(b, &self.d11, f));
        if self.has_pad() && v_pad != 0.0 {
            e2 += 2.0 * v * v_pad * trilinear_idx(b, &self.e12, f) + v_pad * v_pad * trilinear_idx(b, &self.e22, f);
        }
        e2
    }

    /// Total Φ on the box nodes for disk voltage `v` and pad voltage `v_pad`.
    pub fn total_phi(&self, v: f64, v_pad: f64) -> ScalarField {
        let b = &self.region;
        let mut values = Vec::with_capacity(b.len());
        let [n0, n1, n2] = b.shape;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let [x, y, z] = b.coord(i, j, k);
                    let p = b.index(i, j, k);
                    let axi = self.phi2d.sample(x.hypot(y), z).value;
                    let mut phi = v * (axi + self.delta_phi.values[p]);
                    if let Some(p2) = &self.pad_phi {
                        phi += v_pad * p2.values[p];
                    }
                    values.push(phi);
                }
            }
        }
        let mut out = ScalarField::cartesian(b.shape, [b.h; 3], b.origin, values);
        out.mask = self.delta_phi.mask.clone();
        out
    }
}

/// ∇ at a node: centered inside, zero normal component on Neumann faces,
/// second-order one-sided on Dirichlet faces.
fn gradient(b: &Box3, v: &[f64], i: usize, j: usize, k: usize) -> [f64; 3] {
    let idx = [i, j, k];
    let mut g = [0.0; 3];
    for a in 0..3 {
        let n = b.shape[a];
        let at = |m: usize| {
            let mut q = idx;
            q[a] = m;
            v[b.index(q[0], q[1], q[2])]
        };
        let c = idx[a];
        g[a] = if c == 0 {
            match b.faces[a][0] {
                Face::Neumann => 0.0,
                Face::Dirichlet => (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * b.h),
            }
        } else if c == n - 1 {
            match b.faces[a][1] {
                Face::Neumann => 0.0,
                Face::Dirichlet => (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * b.h),
            }
        } else {
            (at(c + 1) - at(c - 1)) / (2.0 * b.h)
        };
    }
    g
}

/// Composed 3D potential for one species, mirror and pair of voltages.
pub struct Potential3d<'a> {
    pub pert: &'a LeadPerturbation,
    pub species: &'a AtomSpecies,
    pub mirror: MirrorSpec,
    pub voltage: f64,
    pub pad_voltage: f64,
}

impl Potential3d<'_> {
    /// U at a Cartesian point, J.
    pub fn at(&self, p: [f64; 3]) -> f64 {
        let mag = self.species.mf_gf * BOHR_MAGNETON * self.mirror.field_at(p[2]);
        mag - 0.5 * self.species.alpha_static * self.pert.e2_at(p, self.voltage, self.pad_voltage)
    }
}

/// Local ring minimum versus azimuth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingProfile {
    /// rad; 0 points away from the lead, π along it.
    pub angles: Vec<f64>,
    /// Local minimum of U in the (ρ, z) half-plane, J; `None` where no
    /// trap minimum exists.
    pub u_min: Vec<Option<f64>>,
    /// Escape level of the axisymmetric trap minus `u_min`, J.
    pub depth: Vec<Option<f64>>,
    /// U_min far from the lead (θ = 0), J.
    pub u_ref: f64,
    /// Unperturbed depth, J.
    pub depth_ref: f64,
    /// max_θ U_min(θ) − u_ref, J. Negative for a dip.
    pub bump_height: f64,
    /// Signed U_min(π) − u_ref, J.
    pub bump_at_lead: f64,
    /// Local depth at the top of the bump, J.
    pub perturbed_depth: f64,
    /// bump_height / depth_ref.
    pub fractional_loss: f64,
    /// Full width at half maximum of the bump, as arc length at ρ₀, m.
    pub fwhm_arc: Option<f64>,
    /// Angles where the trap minimum vanished.
    pub destroyed: Vec<f64>,
}

/// Minimum of U over a window of the (ρ, z) half-plane at azimuth θ.
fn local_minimum(u: &dyn Fn([f64; 3]) -> f64, theta: f64, rho0: f64, z0: f64, z_floor: f64, h: f64) -> Option<f64> {
    let (half_r, below, above) = (2.5e-6, 1.5e-6, 2.5e-6);
    let nr = (2.0 * half_r / h).round() as usize + 1;
    let z_lo = (z0 - below).max(z_floor);
    let nz = ((z0 + above - z_lo) / h).round() as usize + 1;
    let r_lo = (rho0 - half_r).max(0.0);
    let (c, s) = (theta.cos(), theta.sin());
    let mut values = Vec::with_capacity(nr * nz);
    for a in 0..nr {
        let rho = r_lo + a as f64 * h;
        for b in 0..nz {
            values.push(u([rho * c, rho * s, z_lo + b as f64 * h]));
        }
    }
    let f = ScalarField::cartesian([nr, 1, nz], [h; 3], [r_lo, 0.0, z_lo], values);
    find_minimum(&f).ok().map(|m| m.u_min.joules())
}

/// Samples the ring minimum at `n_angles` azimuths of a 3D potential.
pub fn ring_perturbation_profile(
    u: &dyn Fn([f64; 3]) -> f64,
    reference: &TrapCharacterization,
    z_floor: f64,
    h: f64,
    n_angles: usize,
) -> Result<RingProfile> {
    if n_angles < 4 {
        return Err(Error::invalid("n_angles", "need at least 4 azimuths"));
    }
    let (rho0, z0) = reference.min_location;
    let esc = reference.escape_level.joules();
    let angles: Vec<f64> = (0..n_angles).map(|j| 2.0 * PI * j as f64 / n_angles as f64).collect();
    let u_min: Vec<Option<f64>> = angles.iter().map(|&t| local_minimum(u, t, rho0, z0, z_floor, h)).collect();
    let u_ref = u_min[0].ok_or_else(|| Error::NoMinimum("none at the reference azimuth".into()))?;
    let depth_ref = esc - u_ref;
    let depth = u_min.iter().map(|m| m.map(|x| esc - x)).collect();
    let destroyed: Vec<f64> = angles.iter().zip(&u_min).filter(|(_, m)| m.is_none()).map(|(&a, _)| a).collect();
    let bumps: Vec<f64> = u_min.iter().map(|m| m.map_or(f64::NAN, |x| x - u_ref)).collect();
    let (peak, bump_height) = bumps
        .iter()
        .enumerate()
        .filter(|(_, b)| b.is_finite())
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, &b)| (i, b))
        .unwrap_or((0, 0.0));
    let lead_idx = n_angles / 2;
    let bump_at_lead = if n_angles % 2 == 0 {
        bumps[lead_idx]
    } else {
        0.5 * (bumps[lead_idx] + bumps[lead_idx + 1])
    };
    let fwhm_arc = fwhm(&bumps, peak, bump_height).map(|w| w * 2.0 * PI / n_angles as f64 * rho0);
    Ok(RingProfile {
        angles,
        u_min,
        depth,
        u_ref,
        depth_ref,
        bump_height,
        bump_at_lead,
        perturbed_depth: depth_ref - bump_height.max(0.0),
        fractional_loss: bump_height / depth_ref,
        fwhm_arc,
        destroyed,
    })
}

/// Width (in samples, linearly interpolated) of the region around `peak`
/// where |bump| exceeds half of |peak value|, on a periodic sequence.
fn fwhm(bumps: &[f64], peak: usize, height: f64) -> Option<f64> {
    let n = bumps.len();
    let half = 0.5 * height.abs();
    if height == 0.0 {
        return None;
    }
    let level = |i: usize| {
        let b = bumps[i % n];
        if b.is_finite() {
            b * height.signum()
        } else {
            height.abs()
        }
    };
    let mut width = 0.0;
    for dir in [1isize, -1] {
        let mut step = 0usize;
        loop {
            if step >= n / 2 {
                return None;
            }
            let a = (peak as isize + dir * step as isize).rem_euclid(n as isize) as usize;
            let b = (peak as isize + dir * (step as isize + 1)).rem_euclid(n as isize) as usize;
            let (la, lb) = (level(a), level(b));
            if lb < half {
                width += step as f64 + (la - half) / (la - lb);
                break;
            }
            step += 1;
        }
    }
    Some(width)
}

/// Profile of a lead perturbation at voltages (v, v_pad).
pub fn lead_profile(
    pert: &LeadPerturbation,
    species: &AtomSpecies,
    mirror: MirrorSpec,
    reference: &TrapCharacterization,
    v_pad: f64,
    n_angles: usize,
) -> Result<RingProfile> {
    let pot = Potential3d {
        pert,
        species,
        mirror,
        voltage: reference.applied_voltage,
        pad_voltage: v_pad,
    };
    let g = &pert.field2d.grid;
    let z_floor = g.z_top_of_disk() + 2.0 * g.h;
    ring_perturbation_profile(&|p| pot.at(p), reference, z_floor, pert.region.h, n_angles)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadTarget {
    /// No bump at the lead.
    Flat,
    /// A dip of the given depth at the lead, J.
    Dip(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadTuning {
    pub v_pad: f64,
    /// Largest |U_min(θ) − u_ref| over the ring after tuning, J.
    pub residual_bump: f64,
    /// Bump with the pad grounded, J.
    pub grounded_bump: f64,
    pub profile: RingProfile,
}

/// Finds the pad voltage meeting `target` by bracketing a sign change of the
/// bump at the lead over `range` and bisecting; fields are superposed, never
/// re-solved.
pub fn tune_compensation_pad(
    pert: &LeadPerturbation,
    species: &AtomSpecies,
    mirror: MirrorSpec,
    reference: &TrapCharacterization,
    target: PadTarget,
    range: (f64, f64),
    n_angles: usize,
) -> Result<PadTuning> {
    if !pert.has_pad() {
        return Err(Error::NoCompensationPad);
    }
    let goal = match target {
        PadTarget::Flat => 0.0,
        PadTarget::Dip(d) => -d.abs(),
    };
    let g = &pert.field2d.grid;
    let z_floor = g.z_top_of_disk() + 2.0 * g.h;
    let (rho0, z0) = reference.min_location;
    let u_ref = lead_profile(pert, species, mirror, reference, 0.0, 4)?.u_ref;
    let mismatch = |vp: f64| -> Option<f64> {
        let pot = Potential3d {
            pert,
            species,
            mirror,
            voltage: reference.applied_voltage,
            pad_voltage: vp,
        };
        local_minimum(&|p| pot.at(p), PI, rho0, z0, z_floor, pert.region.h).map(|u| u - u_ref - goal)
    };
    const SCAN: usize = 40;
    let (lo, hi) = range;
    let pts: Vec<(f64, Option<f64>)> = (0..=SCAN)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / SCAN as f64;
            (v, mismatch(v))
        })
        .collect();
    let mut bracket = None;
    for w in pts.windows(2) {
        if let ((a, Some(fa)), (b, Some(fb))) = (w[0], w[1]) {
            if fa == 0.0 || fa.signum() != fb.signum() {
                let better = bracket.is_none_or(|(x, y, ..): (f64, f64, f64, f64)| (a + b).abs() < (x + y).abs());
                if better {
                    bracket = Some((a, b, fa, fb));
                }
            }
        }
    }
    let (mut a, mut b, mut fa, _) = bracket.ok_or_else(|| {
        Error::SearchFailure(format!("bump at the lead does not change sign for pad voltages in [{lo}, {hi}] V"))
    })?;
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let Some(fm) = mismatch(m) else { break };
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-9 {
            break;
        }
    }
    let v_pad = 0.5 * (a + b);
    let profile = lead_profile(pert, species, mirror, reference, v_pad, n_angles)?;
    let residual_bump = profile
        .u_min
        .iter()
        .flatten()
        .map(|u| (u - profile.u_ref).abs())
        .fold(0.0, f64::max);
    let grounded_bump = lead_profile(pert, species, mirror, reference, 0.0, n_angles)?.bump_height;
    Ok(PadTuning {
        v_pad,
        residual_bump,
        grounded_bump,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, faces: [[Face; 2]; 3]) -> Box3 {
        Box3 {
            origin: [0.0; 3],
            h: 1.0 / (n - 1) as f64,
            shape: [n; 3],
            faces,
        }
    }

    const ALL_D: [[Face; 2]; 3] = [[Face::Dirichlet, Face::Dirichlet]; 3];

    #[test]
    fn zero_boundary_gives_zero() {
        let b = cube(9, ALL_D);
        let none = |_: [f64; 3]| None;
        let s = solve_box(&b, &none, &Solver3dSettings::default()).unwrap();
        assert!(s.phi.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_solution_is_exact() {
        // Φ = z between plates z=0 (face, 0) and z=1 (conductor, 1), Neumann sides
        let b = cube(
            17,
            [
                [Face::Neumann, Face::Neumann],
                [Face::Neumann, Face::Neumann],
                [Face::Dirichlet, Face::Neumann],
            ],
        );
        let top = |p: [f64; 3]| (p[2] > 1.0 - 1e-9).then_some(1.0);
        let s = solve_box(&b, &top, &Solver3dSettings::default()).unwrap();
        for i in 0..17 {
            for k in 0..17 {
                let v = s.phi.values[b.index(i, 3, k)];
                assert!((v - k as f64 / 16.0).abs() < 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn maximum_principle_and_residual() {
        let b = cube(33, ALL_D);
        let blob = |p: [f64; 3]| {
            let d2 = (p[0] - 0.4).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.6).powi(2);
            (d2 < 0.02).then_some(2.0)
        };
        let s = solve_box(&b, &blob, &Solver3dSettings::default()).unwrap();
        assert!(s.scaled_residual < 1e-9);
        let (lo, hi) = s.phi.min_max();
        assert!(lo >= -1e-12 && hi <= 2.0 + 1e-12);
    }

    #[test]
    fn neumann_face_equals_mirrored_dirichlet_box() {
        // half box with a Neumann symmetry plane at y = 0 vs the full box
        let n = 17;
        let full = Box3 {
            origin: [0.0, -1.0, 0.0],
            h: 1.0 / (n - 1) as f64,
            shape: [n, 2 * n - 1, n],
            faces: ALL_D,
        };
        let half = Box3 {
            origin: [0.0, 0.0, 0.0],
            shape: [n, n, n],
            faces: [
                [Face::Dirichlet, Face::Dirichlet],
                [Face::Neumann, Face::Dirichlet],
                [Face::Dirichlet, Face::Dirichlet],
            ],
            ..full
        };
        let src = |p: [f64; 3]| ((p[0] - 0.5).abs() < 0.1 && p[1].abs() < 0.2 && (p[2] - 0.3).abs() < 0.1).then_some(1.0);
        let settings = Solver3dSettings {
            tolerance: 1e-12,
            ..Default::default()
        };
        let a = solve_box(&full, &src, &settings).unwrap();
        let b = solve_box(&half, &src, &settings).unwrap();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let va = a.phi.values[full.index(i, j + n - 1, k)];
                    let vb = b.phi.values[half.index(i, j, k)];
                    assert!((va - vb).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let b = cube(9, ALL_D);
        let none = |_: [f64; 3]| None;
        let settings = Solver3dSettings {
            node_cap: 100,
            ..Default::default()
        };
        assert!(matches!(
            solve_box(&b, &none, &settings),
            Err(Error::MemoryBudget { nodes: 729, cap: 100 })
        ));
        let g = DiskGeometry::new(10e-6, 0.6e-6);
        assert!(matches!(
            solve_laplace_3d(&g, 50e-9, 1.0, &Solver3dSettings::default()),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn lead_resolution_rule() {
        let g = DiskGeometry::new(10e-6, 0.6e-6);
        assert!(matches!(
            solve_laplace_3d(&g, 100e-9, 1.0, &Solver3dSettings::default()),
            Err(Error::ResolutionTooCoarse { .. })
        ));
    }

    #[test]
    fn classify_parts() {
        let mut g = DiskGeometry::new(10e-6, 0.6e-6);
        g.comp_pad = Some(crate::geometry::CompPad {
            width: 1e-6,
            gap_above_lead: 100e-9,
            voltage: 0.0,
            thickness: 50e-9,
        });
        assert_eq!(classify(&g, [5e-6, 0.0, 0.62e-6], 0.0), Some(Part::Disk));
        assert_eq!(classify(&g, [0.0, 0.0, 0.4e-6], 0.0), Some(Part::Stem));
        assert_eq!(classify(&g, [-12e-6, 0.0, 0.22e-6], 0.0), Some(Part::Lead));
        assert_eq!(classify(&g, [12e-6, 0.0, 0.22e-6], 0.0), None);
        assert_eq!(classify(&g, [-12e-6, 0.3e-6, 0.37e-6], 0.0), Some(Part::Pad));
        assert_eq!(classify(&g, [-12e-6, 0.0, 0.3e-6], 0.0), None);
        assert_eq!(classify(&g.without_lead(), [-12e-6, 0.0, 0.22e-6], 0.0), None);
    }

    #[test]
    fn fwhm_of_triangle() {
        let mut b = vec![0.0; 32];
        b[16] = 4.0;
        b[15] = 2.0;
        b[17] = 2.0;
        // half level 2 is reached exactly one sample out on each side
        assert_eq!(fwhm(&b, 16, 4.0), Some(2.0));
    }
}
