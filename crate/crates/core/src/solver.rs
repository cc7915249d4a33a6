//! Axisymmetric finite-difference Laplace solver for a charged disk above a
//! grounded mirror plane.
//!
//! The unknown is Φ(ρ, z) on a uniform grid with spacing h. Away from the
//! axis the stencil is the standard cylindrical 5-point form
//!
//! ```text
//! (1 + 1/2i) Φ[i+1,k] + (1 - 1/2i) Φ[i-1,k] + Φ[i,k+1] + Φ[i,k-1] - 4 Φ[i,k] = 0
//! ```
//!
//! and on the axis (i = 0) the L'Hôpital limit `4 Φ[1,k] + Φ[0,k±1] - 6 Φ[0,k] = 0`.
//! Dirichlet data: Φ = 0 on the mirror plane and the far boundary, Φ = 1 on
//! every disk node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Symmetry, VectorField};
use crate::geometry::DiskGeometry;

/// Fewest grid cells allowed between the mirror and the disk underside.
pub const MIN_GAP_CELLS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Target spacing in m; snapped down so the disk underside is a grid plane.
    Spacing(f64),
    /// Number of cells between the mirror and the disk underside.
    GapCells(usize),
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::Spacing(50e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Red-black SOR with Chebyshev-accelerated ω from a zero start.
    Sor,
    /// The same SOR, warm-started from a chain of solves on grids coarsened by 2.
    Multilevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Stop once max |h²∇²Φ| over free nodes falls below this (per volt).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-10,
            max_iterations: 200_000,
            backend: Backend::Multilevel,
        }
    }
}

/// Uniform (ρ, z) grid with the mirror at k = 0 and the disk occupying
/// `disk_bottom..=disk_top` in k and `0..=disk_edge` in i.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisymGrid {
    pub h: f64,
    pub n_rho: usize,
    pub n_z: usize,
    pub disk_bottom: usize,
    pub disk_top: usize,
    pub disk_edge: usize,
}

impl AxisymGrid {
    pub fn len(&self) -> usize {
        self.n_rho * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.n_z + k
    }

    pub fn is_disk(&self, i: usize, k: usize) -> bool {
        i <= self.disk_edge && (self.disk_bottom..=self.disk_top).contains(&k)
    }

    pub fn conductor_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for i in 0..=self.disk_edge.min(self.n_rho - 1) {
            for k in self.disk_bottom..=self.disk_top {
                m[self.index(i, k)] = true;
            }
        }
        m
    }

    /// Conductors plus the mirror plane and the far boundary.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let mut m = self.conductor_mask();
        for i in 0..self.n_rho {
            m[self.index(i, 0)] = true;
            m[self.index(i, self.n_z - 1)] = true;
        }
        for k in 0..self.n_z {
            m[self.index(self.n_rho - 1, k)] = true;
        }
        m
    }

    pub fn z_top_of_disk(&self) -> f64 {
        self.disk_top as f64 * self.h
    }
}

/// Lays out the grid for a geometry. The spacing is snapped so that both
/// z = 0 and z = disk_height fall on grid planes.
pub fn build_grid(geometry: &DiskGeometry, resolution: Resolution) -> Result<AxisymGrid> {
    geometry.validate()?;
    let d = geometry.disk_height;
    let gap = match resolution {
        Resolution::Spacing(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("resolution", format!("spacing must be positive, got {h}")));
            }
            snapped_cells(d, h)
        }
        Resolution::GapCells(n) => n,
    };
    if gap < MIN_GAP_CELLS {
        return Err(Error::ResolutionTooCoarse {
            between: "mirror and disk underside",
            cells: gap,
            required: MIN_GAP_CELLS,
        });
    }
    Ok(grid_with_gap_cells(geometry, gap))
}

fn snapped_cells(length: f64, h: f64) -> usize {
    let ratio = length / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-6 {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

pub(crate) fn grid_with_gap_cells(geometry: &DiskGeometry, gap: usize) -> AxisymGrid {
    let h = geometry.disk_height / gap as f64;
    let cells = |len: f64| snapped_cells(len, h).max(1);
    let n_rho = cells(geometry.domain_radius) + 1;
    let n_z = cells(geometry.domain_height) + 1;
    let thick = cells(geometry.disk_thickness);
    let disk_edge = (geometry.disk_radius / h).round() as usize;
    AxisymGrid {
        h,
        n_rho,
        n_z,
        disk_bottom: gap,
        disk_top: gap + thick,
        disk_edge,
    }
}

/// Result of a solve: Φ at unit disk voltage plus convergence statistics.
#[derive(Debug, Clone)]
pub struct AxisymSolution {
    pub grid: AxisymGrid,
    /// Φ per applied volt, with the conductor mask attached.
    pub phi: ScalarField,
    pub iterations: usize,
    /// Final max |h²∇²Φ| over free nodes.
    pub scaled_residual: f64,
}

/// Solves for Φ at unit applied voltage.
pub fn solve_laplace_axisym(
    geometry: &DiskGeometry,
    grid: &AxisymGrid,
    settings: &SolverSettings,
) -> Result<AxisymSolution> {
    solve_with_disk_voltage(geometry, grid, 1.0, settings)
}

/// Solves with an arbitrary disk voltage (0 gives the trivial solution).
pub fn solve_with_disk_voltage(
    geometry: &DiskGeometry,
    grid: &AxisymGrid,
    disk_voltage: f64,
    settings: &SolverSettings,
) -> Result<AxisymSolution> {
    let start = match settings.backend {
        Backend::Sor => None,
        Backend::Multilevel => coarse_start(geometry, grid, disk_voltage, settings)?,
    };
    let mut values = start.unwrap_or_else(|| vec![0.0; grid.len()]);
    let fixed = grid.fixed_mask();
    let conductor = grid.conductor_mask();
    for p in 0..grid.len() {
        if fixed[p] {
            values[p] = if conductor[p] { disk_voltage } else { 0.0 };
        }
    }
    let mut sor = AxisymSor::new(grid, &fixed);
    let (iterations, scaled_residual) = sor.run(&mut values, settings.tolerance, settings.max_iterations)?;
    let phi = ScalarField::axisymmetric(grid.n_rho, grid.n_z, grid.h, values).with_mask(conductor);
    Ok(AxisymSolution {
        grid: *grid,
        phi,
        iterations,
        scaled_residual,
    })
}

/// Runs the axisymmetric SOR on an arbitrary (n_rho × n_z) grid of spacing
/// `h`: nodes marked in `fixed` keep their value in `values`, the rest
/// start from it. Row i = 0 is the axis. Used for verification against
/// closed-form harmonic functions.
pub fn solve_dirichlet_axisym(
    n_rho: usize,
    n_z: usize,
    h: f64,
    fixed: &[bool],
    values: Vec<f64>,
    settings: &SolverSettings,
) -> Result<(ScalarField, usize, f64)> {
    if n_rho < 3 || n_z < 3 || fixed.len() != n_rho * n_z || values.len() != n_rho * n_z {
        return Err(Error::invalid("grid", "need n_rho, n_z ≥ 3 and matching mask and values"));
    }
    let grid = AxisymGrid {
        h,
        n_rho,
        n_z,
        disk_bottom: 0,
        disk_top: 0,
        disk_edge: 0,
    };
    let mut values = values;
    let mut sor = AxisymSor::new(&grid, fixed);
    let (iterations, residual) = sor.run(&mut values, settings.tolerance, settings.max_iterations)?;
    Ok((ScalarField::axisymmetric(n_rho, n_z, h, values), iterations, residual))
}

/// Solution on the grid coarsened by 2, interpolated onto `grid`, when the
/// coarse grid still resolves the gap with a few cells.
fn coarse_start(
    geometry: &DiskGeometry,
    grid: &AxisymGrid,
    disk_voltage: f64,
    settings: &SolverSettings,
) -> Result<Option<Vec<f64>>> {
    let gap = grid.disk_bottom;
    if gap % 2 != 0 || gap / 2 < 3 || grid.len() < 4096 {
        return Ok(None);
    }
    let coarse = grid_with_gap_cells(geometry, gap / 2);
    let coarse_settings = SolverSettings {
        // the fine solve finishes the job; the warm start only needs the smooth part
        tolerance: (settings.tolerance * 100.0).max(1e-9),
        ..*settings
    };
    let sol = solve_with_disk_voltage(geometry, &coarse, disk_voltage, &coarse_settings)?;
    let mut out = vec![0.0; grid.len()];
    for i in 0..grid.n_rho {
        for k in 0..grid.n_z {
            let rho = i as f64 * grid.h / coarse.h;
            let z = k as f64 * grid.h / coarse.h;
            out[grid.index(i, k)] = bilinear(&sol.phi, rho, z);
        }
    }
    Ok(Some(out))
}

/// Bilinear sample of an axisymmetric field at fractional indices, clamped to the grid.
pub(crate) fn bilinear(f: &ScalarField, fi: f64, fk: f64) -> f64 {
    let (n0, n2) = (f.shape[0], f.shape[2]);
    let fi = fi.clamp(0.0, (n0 - 1) as f64);
    let fk = fk.clamp(0.0, (n2 - 1) as f64);
    let i0 = (fi.floor() as usize).min(n0.saturating_sub(2));
    let k0 = (fk.floor() as usize).min(n2.saturating_sub(2));
    let (ti, tk) = (fi - i0 as f64, fk - k0 as f64);
    let v = |i: usize, k: usize| f.at(i, k);
    (1.0 - ti) * ((1.0 - tk) * v(i0, k0) + tk * v(i0, k0 + 1))
        + ti * ((1.0 - tk) * v(i0 + 1, k0) + tk * v(i0 + 1, k0 + 1))
}

/// Red-black SOR over an axisymmetric grid with precomputed row weights.
struct AxisymSor<'a> {
    n_rho: usize,
    n_z: usize,
    fixed: &'a [bool],
    /// Normalized weights of Φ[i+1] and Φ[i-1], and of each z neighbour.
    w_out: Vec<f64>,
    w_in: Vec<f64>,
    w_z: Vec<f64>,
    /// Jacobi spectral radius estimate for the Chebyshev ω schedule.
    rho_jacobi: f64,
}

impl<'a> AxisymSor<'a> {
    fn new(grid: &AxisymGrid, fixed: &'a [bool]) -> Self {
        let mut w_out = vec![0.0; grid.n_rho];
        let mut w_in = vec![0.0; grid.n_rho];
        let mut w_z = vec![0.0; grid.n_rho];
        w_out[0] = 4.0 / 6.0;
        w_z[0] = 1.0 / 6.0;
        for i in 1..grid.n_rho {
            let c = 0.5 / i as f64;
            w_out[i] = (1.0 + c) / 4.0;
            w_in[i] = (1.0 - c) / 4.0;
            w_z[i] = 0.25;
        }
        // Lowest mode J0(2.405 ρ/R)·sin(πz/H).
        let a = 2.405 / (grid.n_rho - 1) as f64;
        let b = std::f64::consts::PI / (grid.n_z - 1) as f64;
        let rho_jacobi = (1.0 - (a * a + b * b) / 4.0).max(0.0);
        AxisymSor {
            n_rho: grid.n_rho,
            n_z: grid.n_z,
            fixed,
            w_out,
            w_in,
            w_z,
            rho_jacobi,
        }
    }

    fn sweep(&self, phi: &mut [f64], color: usize, omega: f64) {
        let nz = self.n_z;
        for i in 0..self.n_rho - 1 {
            let row = i * nz;
            let (wo, wi, wz) = (self.w_out[i], self.w_in[i], self.w_z[i]);
            let mut k = 1 + (i + 1 + color) % 2;
            while k < nz - 1 {
                let p = row + k;
                if !self.fixed[p] {
                    let inner = if i > 0 { wi * phi[p - nz] } else { 0.0 };
                    let gs = wo * phi[p + nz] + inner + wz * (phi[p + 1] + phi[p - 1]);
                    phi[p] += omega * (gs - phi[p]);
                }
                k += 2;
            }
        }
    }

    fn residual(&self, phi: &[f64]) -> f64 {
        let nz = self.n_z;
        let mut worst = 0.0f64;
        for i in 0..self.n_rho - 1 {
            let diag = if i == 0 { 6.0 } else { 4.0 };
            let (wo, wi, wz) = (self.w_out[i], self.w_in[i], self.w_z[i]);
            for k in 1..nz - 1 {
                let p = i * nz + k;
                if self.fixed[p] {
                    continue;
                }
                let inner = if i > 0 { wi * phi[p - nz] } else { 0.0 };
                let gs = wo * phi[p + nz] + inner + wz * (phi[p + 1] + phi[p - 1]);
                worst = worst.max((diag * (gs - phi[p])).abs());
            }
        }
        worst
    }

    fn run(&mut self, phi: &mut [f64], tolerance: f64, max_iterations: usize) -> Result<(usize, f64)> {
        const CHECK_EVERY: usize = 25;
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

/// E = −∇Φ by centered differences, second-order one-sided on the outer
/// boundaries, and E_ρ = 0 on the axis.
pub fn electric_field(phi: &ScalarField) -> VectorField {
    match phi.symmetry {
        Symmetry::Axisymmetric => axisym_gradient(phi),
        Symmetry::Cartesian3d => cartesian_gradient(phi),
    }
}

fn derivative(v: impl Fn(usize) -> f64, n: usize, idx: usize, h: f64) -> f64 {
    if n < 2 {
        0.0
    } else if n == 2 {
        (v(1) - v(0)) / h
    } else if idx == 0 {
        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
    } else if idx == n - 1 {
        (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h)
    } else {
        (v(idx + 1) - v(idx - 1)) / (2.0 * h)
    }
}

fn axisym_gradient(phi: &ScalarField) -> VectorField {
    let (n_rho, n_z) = (phi.shape[0], phi.shape[2]);
    let h = phi.spacing[0];
    let mut e_rho = vec![0.0; phi.len()];
    let mut e_z = vec![0.0; phi.len()];
    for i in 0..n_rho {
        for k in 0..n_z {
            let p = i * n_z + k;
            e_rho[p] = if i == 0 {
                0.0
            } else {
                -derivative(|a| phi.at(a, k), n_rho, i, h)
            };
            e_z[p] = -derivative(|c| phi.at(i, c), n_z, k, phi.spacing[2]);
        }
    }
    VectorField {
        symmetry: phi.symmetry,
        shape: phi.shape,
        spacing: phi.spacing,
        origin: phi.origin,
        components: vec![e_rho, e_z],
    }
}

fn cartesian_gradient(phi: &ScalarField) -> VectorField {
    let [nx, ny, nz] = phi.shape;
    let mut comps = vec![vec![0.0; phi.len()]; 3];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = phi.index(i, j, k);
                comps[0][p] = -derivative(|a| phi.values[phi.index(a, j, k)], nx, i, phi.spacing[0]);
                comps[1][p] = -derivative(|a| phi.values[phi.index(i, a, k)], ny, j, phi.spacing[1]);
                comps[2][p] = -derivative(|a| phi.values[phi.index(i, j, a)], nz, k, phi.spacing[2]);
            }
        }
    }
    VectorField {
        symmetry: phi.symmetry,
        shape: phi.shape,
        spacing: phi.spacing,
        origin: phi.origin,
        components: comps,
    }
}

/// max |∇²Φ| (in V/m² per volt of Φ) over interior free nodes of an
/// axisymmetric field. Conductor nodes come from the field's mask; the
/// mirror row, the top row and the outer column are boundary data.
pub fn solver_residual(phi: &ScalarField) -> f64 {
    let (n_rho, n_z) = (phi.shape[0], phi.shape[2]);
    let h = phi.spacing[0];
    let mut worst = 0.0f64;
    for i in 0..n_rho.saturating_sub(1) {
        for k in 1..n_z.saturating_sub(1) {
            let p = i * n_z + k;
            if phi.is_masked(p) {
                continue;
            }
            let lap = if i == 0 {
                4.0 * phi.at(1, k) + phi.at(0, k + 1) + phi.at(0, k - 1) - 6.0 * phi.at(0, k)
            } else {
                let c = 0.5 / i as f64;
                (1.0 + c) * phi.at(i + 1, k) + (1.0 - c) * phi.at(i - 1, k) + phi.at(i, k + 1) + phi.at(i, k - 1)
                    - 4.0 * phi.at(i, k)
            };
            worst = worst.max(lap.abs());
        }
    }
    worst / (h * h)
}
