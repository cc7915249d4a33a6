//! Monte Carlo loading: a cold cloud falls onto the mirror, the disk voltage
//! is ramped as the atoms reach their turning point, and the atoms left
//! bound in the trap basin are counted.
//!
//! Trajectories fly ballistically until they descend to `z_start`, then are
//! integrated with velocity Verlet in the axisymmetric potential (gravity
//! on). Transverse landing points are importance-sampled uniformly inside
//! a capture cylinder; each trajectory carries the ratio of the true landing
//! density to the proposal density.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{characterize_system, escape_sinks, TrapCharacterization};
use crate::error::{Error, Result};
use crate::potential::{total_potential_grid, TrapSystem};
use crate::species::AtomSpecies;
use crate::units::{BOHR_MAGNETON, BOLTZMANN, STANDARD_GRAVITY};
use crate::watershed::{sublevel_component, Surface};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudSpec {
    /// K
    pub temperature: f64,
    /// Initial Gaussian width per axis, m.
    pub sigma: [f64; 3],
    /// Cloud center above the mirror, m.
    pub drop_height: f64,
    /// Cloud center relative to the disk axis, m.
    pub center_offset: [f64; 2],
}

impl Default for CloudSpec {
    fn default() -> Self {
        CloudSpec {
            temperature: 10e-6,
            sigma: [0.5e-3; 3],
            drop_height: 3e-3,
            center_offset: [0.0; 2],
        }
    }
}

impl CloudSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid("temperature", "must be non-negative"));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("sigma", "must be non-negative"));
        }
        if !(self.drop_height > 100e-6) {
            return Err(Error::invalid("drop_height", "must lie well above the trap region"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    #[default]
    Linear,
    Smoothstep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// When the cloud centroid, released at rest, reaches its turning point.
    #[default]
    TurningPoint,
    /// Fixed time after release, s.
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSchedule {
    pub trigger: Trigger,
    /// s
    pub ramp_duration: f64,
    pub shape: RampShape,
    /// V
    pub v_final: f64,
}

impl Default for RampSchedule {
    fn default() -> Self {
        RampSchedule {
            trigger: Trigger::TurningPoint,
            ramp_duration: 2e-4,
            shape: RampShape::Linear,
            v_final: 0.0,
        }
    }
}

impl RampSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_duration.is_finite() && self.ramp_duration > 0.0) {
            return Err(Error::invalid("ramp_duration", "must be positive"));
        }
        if !(self.v_final.is_finite() && self.v_final >= 0.0) {
            return Err(Error::invalid("v_final", "must be non-negative"));
        }
        Ok(())
    }

    /// Disk voltage at time `t` for a ramp starting at `t0`.
    pub fn voltage(&self, t: f64, t0: f64) -> f64 {
        let s = ((t - t0) / self.ramp_duration).clamp(0.0, 1.0);
        let f = match self.shape {
            RampShape::Linear => s,
            RampShape::Smoothstep => s * s * (3.0 - 2.0 * s),
        };
        self.v_final * f
    }

    /// dV/dt at time `t`.
    pub fn voltage_rate(&self, t: f64, t0: f64) -> f64 {
        let s = (t - t0) / self.ramp_duration;
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let df = match self.shape {
            RampShape::Linear => 1.0,
            RampShape::Smoothstep => 6.0 * s * (1.0 - s),
        };
        self.v_final * df / self.ramp_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
}

fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn velocity_sigma(species: &AtomSpecies, temperature: f64) -> f64 {
    (BOLTZMANN * temperature / species.mass).sqrt()
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("finite non-negative sigma")
}

/// Gaussian positions and Maxwell-Boltzmann velocities; trajectory `i` draws
/// from its own stream so the ensemble does not depend on evaluation order.
pub fn sample_cloud(spec: &CloudSpec, species: &AtomSpecies, n: usize, seed: u64) -> Vec<AtomState> {
    let sv = velocity_sigma(species, spec.temperature);
    let center = [spec.center_offset[0], spec.center_offset[1], spec.drop_height];
    (0..n)
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            let pos = [0, 1, 2].map(|a| center[a] + normal(spec.sigma[a]).sample(&mut rng));
            let vel = [0, 1, 2].map(|_| normal(sv).sample(&mut rng));
            AtomState { pos, vel }
        })
        .collect()
}

/// Height and time at which an atom released at rest from `drop_height`
/// is stopped by the mirror (gravity plus exponential repulsion).
pub fn turning_point(species: &AtomSpecies, mirror: &crate::potential::MirrorSpec, drop_height: f64) -> (f64, f64) {
    let u0 = species.mf_gf * BOHR_MAGNETON * mirror.b0_surface;
    let mg = species.mass * STANDARD_GRAVITY;
    let k = 2.0 * PI / mirror.period_a;
    let mut z = 0.0;
    for _ in 0..50 {
        z = (u0 / (mg * (drop_height - z))).ln() / k;
    }
    let t = (2.0 * (drop_height - z) / STANDARD_GRAVITY).sqrt();
    (z, t)
}

/// Time-dependent dynamics in a composed trap.
pub struct Dynamics<'a> {
    pub system: &'a TrapSystem,
    pub ramp: &'a RampSchedule,
    pub t_trigger: f64,
    /// Largest allowed step, s.
    pub dt_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Running,
    /// Left the domain or rose through `z_exit`.
    Escaped,
    /// Touched the disk.
    HitConductor,
}

impl Dynamics<'_> {
    /// Potential (J) and acceleration at `pos` and time `t`.
    pub fn potential_accel(&self, pos: [f64; 3], t: f64) -> Option<(f64, [f64; 3])> {
        let v = self.ramp.voltage(t, self.t_trigger);
        self.static_potential_accel(pos, v)
    }

    fn static_potential_accel(&self, pos: [f64; 3], v: f64) -> Option<(f64, [f64; 3])> {
        let s = self.system;
        let m = s.species.mass;
        let [x, y, z] = pos;
        let rho = x.hypot(y);
        let f = &s.field;
        let (u, d_rho, d_z) = if f.in_domain(rho, z) {
            if f.inside_conductor(rho, z) {
                return None;
            }
            s.potential_gradient_rz(rho, z, v)
        } else {
            // outside the solved domain the field has decayed
            let mag = s.species.mf_gf * BOHR_MAGNETON * s.mirror.field_at(z);
            let mg = m * STANDARD_GRAVITY;
            (mag + mg * z, 0.0, -2.0 * PI / s.mirror.period_a * mag + mg)
        };
        let (ax, ay) = if rho > 0.0 {
            (-d_rho * x / (rho * m), -d_rho * y / (rho * m))
        } else {
            (0.0, 0.0)
        };
        Some((u, [ax, ay, -d_z / m]))
    }

    /// Total energy (J) at time `t`.
    pub fn energy(&self, s: &AtomState, t: f64) -> Option<f64> {
        let (u, _) = self.potential_accel(s.pos, t)?;
        let v2: f64 = s.vel.iter().map(|v| v * v).sum();
        Some(u + 0.5 * self.system.species.mass * v2)
    }

    /// ∂U/∂t at fixed position.
    pub fn potential_rate(&self, pos: [f64; 3], t: f64) -> f64 {
        let rho = pos[0].hypot(pos[1]);
        if !self.system.field.in_domain(rho, pos[2]) {
            return 0.0;
        }
        let v = self.ramp.voltage(t, self.t_trigger);
        let e2 = self.system.field.e2_at(rho, pos[2]).value;
        -self.system.species.alpha_static * v * self.ramp.voltage_rate(t, self.t_trigger) * e2
    }
}

/// Result of [`propagate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub state: AtomState,
    pub t: f64,
    pub fate: Fate,
    pub steps: usize,
}

/// Velocity-Verlet integration from `t0` to `t_end`. The atom stops early
/// when it touches a conductor, leaves the solved domain, or rises through
/// `z_exit` moving upward.
/// `observer` sees every accepted step.
pub fn propagate(
    dynamics: &Dynamics,
    mut state: AtomState,
    t0: f64,
    t_end: f64,
    dt: f64,
    z_exit: f64,
    observer: &mut dyn FnMut(f64, &AtomState),
) -> Result<Trajectory> {
    if !(dt > 0.0) || dt > dynamics.dt_limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            dt,
            limit: dynamics.dt_limit,
        });
    }
    let mut t = t0;
    let Some((_, mut acc)) = dynamics.potential_accel(state.pos, t) else {
        return Ok(Trajectory {
            state,
            t,
            fate: Fate::HitConductor,
            steps: 0,
        });
    };
    let mut steps = 0;
    while t < t_end - 1e-15 {
        let h = dt.min(t_end - t);
        let mut pos = state.pos;
        for a in 0..3 {
            pos[a] += state.vel[a] * h + 0.5 * acc[a] * h * h;
        }
        t += h;
        steps += 1;
        let Some((_, next)) = dynamics.potential_accel(pos, t) else {
            state.pos = pos;
            return Ok(Trajectory {
                state,
                t,
                fate: Fate::HitConductor,
                steps,
            });
        };
        for a in 0..3 {
            state.vel[a] += 0.5 * (acc[a] + next[a]) * h;
        }
        state.pos = pos;
        acc = next;
        observer(t, &state);
        let rho = state.pos[0].hypot(state.pos[1]);
        let left = !dynamics.system.field.in_domain(rho, state.pos[2]);
        if left || (state.pos[2] > z_exit && state.vel[2] > 0.0) {
            return Ok(Trajectory {
                state,
                t,
                fate: Fate::Escaped,
                steps,
            });
        }
    }
    Ok(Trajectory {
        state,
        t,
        fate: Fate::Running,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadingSettings {
    pub n: usize,
    pub seed: u64,
    /// Time after the ramp before atoms are classified, s.
    pub settle: f64,
    /// Radius of the landing cylinder that is sampled, in disk radii.
    pub capture_radius_factor: f64,
    /// Height at which numerical integration starts, m.
    pub z_start: f64,
    /// Integration step; default is the fastest trap period / 100.
    pub dt: Option<f64>,
    pub threads: usize,
    pub histogram_bins: usize,
    /// Importance-sample landing points; otherwise sample the whole cloud.
    pub importance: bool,
}

impl Default for LoadingSettings {
    fn default() -> Self {
        LoadingSettings {
            n: 20_000,
            seed: 1,
            settle: 5e-3,
            capture_radius_factor: 1.5,
            z_start: 30e-6,
            dt: None,
            threads: 1,
            histogram_bins: 20,
            importance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Bin center, energy above U_min, μK.
    pub energy_uk: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingResult {
    pub n_sampled: usize,
    pub n_captured: usize,
    /// Trajectories whose landing point lies on the disk footprint.
    pub n_footprint: usize,
    /// Captured atoms per atom landing on the disk footprint.
    pub capture_fraction: f64,
    /// 95% Wilson interval of `capture_fraction`.
    pub capture_ci: (f64, f64),
    /// Captured atoms per atom of the whole cloud.
    pub cloud_fraction: f64,
    pub cloud_fraction_stderr: f64,
    /// Probability that an atom of the cloud lands on the disk footprint.
    pub footprint_probability: f64,
    pub energy_histogram: Vec<HistogramBin>,
    /// Mean importance weight; estimates the probability of landing in the
    /// sampled cylinder.
    pub importance_weight_sum: f64,
    pub trigger_time: f64,
    pub dt: f64,
    pub trap: TrapCharacterization,
    pub warnings: Vec<String>,
}

/// Per-trajectory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub initial: AtomState,
    pub weight: f64,
    pub on_footprint: bool,
    pub final_state: Option<AtomState>,
    pub fate: Option<Fate>,
    pub captured: bool,
    /// Final energy above U_min, J.
    pub final_energy: Option<f64>,
}

/// Basin membership of the static trap at V_final on the 2D grid.
struct Basin {
    member: Vec<bool>,
    n_z: usize,
    h: f64,
}

impl Basin {
    fn new(system: &TrapSystem, trap: &TrapCharacterization) -> Self {
        let u = total_potential_grid(system);
        let blocked = u.mask.clone().unwrap_or_else(|| vec![false; u.len()]);
        let sink = escape_sinks(&u);
        let surface = Surface {
            n0: u.shape[0],
            n1: u.shape[2],
            values: &u.values,
            blocked: &blocked,
            sink: &sink,
        };
        let h = u.spacing[0];
        let (i, k) = (
            (trap.min_location.0 / h).round() as usize,
            (trap.min_location.1 / h).round() as usize,
        );
        let start = i * u.shape[2] + k;
        let mut member = vec![false; u.len()];
        for p in sublevel_component(&surface, start, trap.escape_level.joules()) {
            member[p] = true;
        }
        Basin {
            member,
            n_z: u.shape[2],
            h,
        }
    }

    fn contains(&self, rho: f64, z: f64) -> bool {
        let i = (rho / self.h).round() as usize;
        let k = (z / self.h).round() as usize;
        if k >= self.n_z {
            return false;
        }
        self.member.get(i * self.n_z + k).copied().unwrap_or(false)
    }
}

fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// First downward crossing of `z_start` on a ballistic arc, if any.
fn arrival_time(z0: f64, vz: f64, z_start: f64) -> Option<f64> {
    let g = STANDARD_GRAVITY;
    let disc = vz * vz + 2.0 * g * (z0 - z_start);
    if disc < 0.0 {
        return None;
    }
    let t = (vz + disc.sqrt()) / g;
    (t >= 0.0).then_some(t)
}

/// Runs the loading simulation on `system` (its applied voltage is ignored;
/// the ramp sets the voltage).
pub fn run_loading(
    cloud: &CloudSpec,
    system: &TrapSystem,
    ramp: &RampSchedule,
    settings: &LoadingSettings,
) -> Result<(LoadingResult, Vec<TrajectoryRecord>)> {
    cloud.validate()?;
    ramp.validate()?;
    if settings.n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let mut sys = system.with_voltage(ramp.v_final);
    sys.include_gravity = true;
    let trap = characterize_system(&sys)?;
    let fastest = trap.omega_r.max(trap.omega_perp).max(trap.mode_r).max(trap.mode_perp);
    let dt_limit = 2.0 * PI / fastest / 40.0;
    let dt = settings.dt.unwrap_or(dt_limit * 0.4);
    if dt > dt_limit {
        return Err(Error::StepTooLarge { dt, limit: dt_limit });
    }
    let species = &sys.species;
    let t_trigger = match ramp.trigger {
        Trigger::TurningPoint => turning_point(species, &sys.mirror, cloud.drop_height).1,
        Trigger::Time(t) => t,
    };
    let t_end = t_trigger + ramp.ramp_duration + settings.settle;
    let dynamics = Dynamics {
        system: &sys,
        ramp,
        t_trigger,
        dt_limit,
    };
    let basin = Basin::new(&sys, &trap);
    let r_disk = sys.field.geometry.disk_radius;
    let r_cyl = settings.capture_radius_factor * r_disk;
    let sv = velocity_sigma(species, cloud.temperature);
    let u_esc = trap.escape_level.joules();
    let u_min = trap.u_min.joules();
    let z_start = settings.z_start.min(0.9 * sys.field.z_max());

    let run_one = |i: usize| -> Result<TrajectoryRecord> {
        let mut rng = trajectory_rng(settings.seed, i as u64);
        let z0 = cloud.drop_height + normal(cloud.sigma[2]).sample(&mut rng);
        let vel: [f64; 3] = [0, 1, 2].map(|_| normal(sv).sample(&mut rng));
        let t_arr = arrival_time(z0, vel[2], z_start);
        let (x0, y0, weight) = if settings.importance {
            // landing point uniform in the cylinder, then back-propagated
            let t_land = t_arr.unwrap_or(0.0);
            let r = r_cyl * rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let (lx, ly) = (r * phi.cos(), r * phi.sin());
            let x0 = lx - vel[0] * t_land;
            let y0 = ly - vel[1] * t_land;
            let dx = x0 - cloud.center_offset[0];
            let dy = y0 - cloud.center_offset[1];
            let (sx, sy) = (cloud.sigma[0], cloud.sigma[1]);
            let pdf = (-(dx * dx) / (2.0 * sx * sx) - (dy * dy) / (2.0 * sy * sy)).exp() / (2.0 * PI * sx * sy);
            (x0, y0, pdf * PI * r_cyl * r_cyl)
        } else {
            let x0 = cloud.center_offset[0] + normal(cloud.sigma[0]).sample(&mut rng);
            let y0 = cloud.center_offset[1] + normal(cloud.sigma[1]).sample(&mut rng);
            (x0, y0, 1.0)
        };
        let initial = AtomState {
            pos: [x0, y0, z0],
            vel,
        };
        let mut rec = TrajectoryRecord {
            index: i,
            initial,
            weight,
            on_footprint: false,
            final_state: None,
            fate: None,
            captured: false,
            final_energy: None,
        };
        let Some(t_arr) = t_arr else {
            return Ok(rec);
        };
        let pos = [x0 + vel[0] * t_arr, y0 + vel[1] * t_arr, z_start];
        rec.on_footprint = pos[0].hypot(pos[1]) <= r_disk;
        if t_arr >= t_end {
            return Ok(rec);
        }
        let vz = vel[2] - STANDARD_GRAVITY * t_arr;
        let start = AtomState {
            pos,
            vel: [vel[0], vel[1], vz],
        };
        let traj = propagate(&dynamics, start, t_arr, t_end, dt, z_start * (1.0 + 1e-9), &mut |_, _| {})?;
        rec.final_state = Some(traj.state);
        rec.fate = Some(traj.fate);
        if traj.fate == Fate::Running {
            let s = traj.state;
            let rho = s.pos[0].hypot(s.pos[1]);
            if let Some(e) = dynamics.energy(&s, t_end) {
                rec.final_energy = Some(e - u_min);
                rec.captured = e < u_esc && basin.contains(rho, s.pos[2]);
            }
        }
        Ok(rec)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads.max(1))
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    let records: Vec<TrajectoryRecord> =
        pool.install(|| (0..settings.n).into_par_iter().map(run_one).collect::<Result<Vec<_>>>())?;

    // fixed-order reductions
    let n = settings.n as f64;
    let mut w_cap = 0.0;
    let mut w_cap2 = 0.0;
    let mut w_foot = 0.0;
    let mut w_sum = 0.0;
    let (mut n_cap, mut n_foot) = (0usize, 0usize);
    let mut energies = Vec::new();
    for r in &records {
        w_sum += r.weight;
        if r.on_footprint {
            w_foot += r.weight;
            n_foot += 1;
        }
        if r.captured {
            n_cap += 1;
            w_cap += r.weight;
            w_cap2 += r.weight * r.weight;
            if let Some(e) = r.final_energy {
                energies.push(e);
            }
        }
    }
    let cloud_fraction = w_cap / n;
    let cloud_fraction_stderr = ((w_cap2 / n - cloud_fraction * cloud_fraction).max(0.0) / n).sqrt();
    let capture_fraction = if w_foot > 0.0 { w_cap / w_foot } else { 0.0 };
    let depth = trap.depth.joules();
    let bins = settings.histogram_bins.max(1);
    let mut counts = vec![0usize; bins];
    for e in &energies {
        let b = ((e / depth) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    let energy_histogram = counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            energy_uk: (b as f64 + 0.5) / bins as f64 * depth / BOLTZMANN * 1e6,
            count,
        })
        .collect();
    let mut warnings = Vec::new();
    if n_cap < 10 {
        warnings.push(format!("only {n_cap} captures; the confidence interval is not meaningful"));
    }
    let result = LoadingResult {
        n_sampled: settings.n,
        n_captured: n_cap,
        n_footprint: n_foot,
        capture_fraction,
        capture_ci: wilson(n_cap, n_foot),
        cloud_fraction,
        cloud_fraction_stderr,
        footprint_probability: w_foot / n,
        energy_histogram,
        importance_weight_sum: w_sum / n,
        trigger_time: t_trigger,
        dt,
        trap,
        warnings,
    };
    Ok((result, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySpec {
    /// Fraction of the array area covered by disks.
    pub coverage: f64,
    /// Side length of the square array, m.
    pub side: f64,
    /// Width of the atom distribution on the surface, m.
    pub footprint_sigma: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        ArraySpec {
            coverage: 0.2,
            side: 0.5e-3,
            footprint_sigma: 0.5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayYield {
    /// Atoms in one trap centered under the cloud.
    pub single_trap: f64,
    /// Atoms over the whole array.
    pub array: f64,
}

/// Expected captured atoms for one centered trap of radius `disk_radius`
/// and for a square array of traps centered under the cloud.
pub fn array_yield(capture_fraction: f64, cloud_atoms: f64, disk_radius: f64, spec: &ArraySpec) -> ArrayYield {
    let s = spec.footprint_sigma;
    let single = capture_fraction * cloud_atoms * (1.0 - (-(disk_radius * disk_radius) / (2.0 * s * s)).exp());
    let half = 0.5 * spec.side / (s * std::f64::consts::SQRT_2);
    let on_array = statrs::function::erf::erf(half).powi(2);
    ArrayYield {
        single_trap: single,
        array: capture_fraction * cloud_atoms * spec.coverage * on_array,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::MirrorSpec;

    #[test]
    fn zero_temperature_has_no_velocity() {
        let spec = CloudSpec {
            temperature: 0.0,
            ..Default::default()
        };
        let s = sample_cloud(&spec, &AtomSpecies::cs133(), 100, 3);
        assert!(s.iter().all(|a| a.vel == [0.0; 3]));
    }

    #[test]
    fn equipartition() {
        let spec = CloudSpec::default();
        let cs = AtomSpecies::cs133();
        let n = 100_000;
        let s = sample_cloud(&spec, &cs, n, 11);
        for a in 0..3 {
            let ke: f64 = s.iter().map(|x| 0.5 * cs.mass * x.vel[a] * x.vel[a]).sum::<f64>() / n as f64;
            let expect = 0.5 * BOLTZMANN * spec.temperature;
            // relative standard error of a χ²₁ mean is √(2/n)
            assert!((ke / expect - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "{a} {ke} {expect}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = CloudSpec::default();
        let cs = AtomSpecies::cs133();
        assert_eq!(sample_cloud(&spec, &cs, 50, 9), sample_cloud(&spec, &cs, 50, 9));
        assert_ne!(sample_cloud(&spec, &cs, 50, 9), sample_cloud(&spec, &cs, 50, 10));
        // prefix stability: trajectory i does not depend on n
        assert_eq!(sample_cloud(&spec, &cs, 50, 9)[..20], sample_cloud(&spec, &cs, 20, 9)[..]);
    }

    #[test]
    fn ramp_profiles() {
        let r = RampSchedule {
            v_final: 10.0,
            ..Default::default()
        };
        assert_eq!(r.voltage(-1.0, 0.0), 0.0);
        assert_eq!(r.voltage(1e-4, 0.0), 5.0);
        assert_eq!(r.voltage(1.0, 0.0), 10.0);
        let s = RampSchedule {
            shape: RampShape::Smoothstep,
            ..r
        };
        assert_eq!(s.voltage(1e-4, 0.0), 5.0);
        let mut last = 0.0;
        for i in 0..=100 {
            let v = s.voltage(i as f64 * 2e-6, 0.0);
            assert!(v >= last);
            last = v;
        }
        assert!(r.validate().is_ok());
        assert!(RampSchedule {
            ramp_duration: 0.0,
            ..r
        }
        .validate()
        .is_err());
    }

    #[test]
    fn turning_point_balances_energy() {
        let cs = AtomSpecies::cs133();
        let m = MirrorSpec::default();
        let (z, t) = turning_point(&cs, &m, 3e-3);
        let u = cs.mf_gf * BOHR_MAGNETON * m.field_at(z);
        let fall = cs.mass * STANDARD_GRAVITY * (3e-3 - z);
        assert!((u / fall - 1.0).abs() < 1e-12);
        assert!(z > 2e-6 && z < 3e-6, "{z}");
        assert!((t - (2.0 * (3e-3 - z) / STANDARD_GRAVITY).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wilson_interval() {
        let (lo, hi) = wilson(15, 1000);
        assert!(lo < 0.015 && hi > 0.015);
        assert!((lo - 0.0091).abs() < 5e-4 && (hi - 0.0246).abs() < 5e-4, "{lo} {hi}");
        assert_eq!(wilson(0, 0), (0.0, 1.0));
    }

    #[test]
    fn arrival_time_matches_kinematics() {
        let t = arrival_time(1e-3, 0.0, 0.0).unwrap();
        assert!((0.5 * STANDARD_GRAVITY * t * t - 1e-3).abs() < 1e-15);
        let t = arrival_time(1e-3, 0.1, 0.0).unwrap();
        assert!((1e-3 + 0.1 * t - 0.5 * STANDARD_GRAVITY * t * t).abs() < 1e-15);
    }

    #[test]
    fn array_yield_examples() {
        let spec = ArraySpec::default();
        let y = array_yield(0.015, 1e7, 10e-6, &spec);
        assert!(y.single_trap > 25.0 && y.single_trap < 50.0, "{}", y.single_trap);
        assert!(y.array > 1e3 && y.array < 1e4, "{}", y.array);
        let none = array_yield(0.015, 1e7, 10e-6, &ArraySpec { coverage: 0.0, ..spec });
        assert_eq!(none.array, 0.0);
    }
}
