//! Command-line front end. `run` parses argv, executes one subcommand, writes
//! its artifacts into the output directory and returns the exit code.
//!
//! Every run writes `manifest.json` (resolved config, seed, version, argv)
//! and `summary.json`; the summary is also printed to stdout, including on
//! failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{characterize_system, optimize_voltage, TrapCharacterization};
use crate::config::{parse_config, PadGoal, RunConfig, SweepParameter, VoltageChoice};
use crate::degeneracy::gas_criteria;
use crate::error::{Error, Result};
use crate::geometry::DiskGeometry;
use crate::loading::{array_yield, run_loading, TrajectoryRecord};
use crate::potential::{total_potential_grid, TrapSystem, UnitField};
use crate::solver3d::{lead_profile, tune_compensation_pad, LeadPerturbation, PadTarget};
use crate::species::AtomSpecies;
use crate::units::{EnergyQuantity, PLANCK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ringtrap", version, about = "Magneto-electrostatic ring trap design")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Comma-separated species names, e.g. Cs,Rb.
    #[arg(long, global = true, value_delimiter = ',')]
    pub species: Option<Vec<String>>,
    /// Disk voltage in volts, or "auto".
    #[arg(long = "V", global = true)]
    pub voltage: Option<VoltageChoice>,
    /// Grid spacing of the axisymmetric solve, m.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    /// Monte Carlo seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write field grids (binary and CSV).
    #[arg(long, global = true)]
    pub dump_grid: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the disk field for the configured geometry.
    Solve,
    /// Trap depth, frequencies, Lamb-Dicke parameters, field and volume.
    Characterize,
    /// Trap table over species, disk heights and radii.
    Table,
    /// Monte Carlo loading of a dropped cloud by a voltage ramp.
    Load,
    /// Azimuthal perturbation of the ring by the lead.
    Perturb3d,
    /// One-dimensional quantum-gas criteria.
    Gas,
    /// Characterization versus one parameter.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Characterize => "characterize",
            Command::Table => "table",
            Command::Load => "load",
            Command::Perturb3d => "perturb3d",
            Command::Gas => "gas",
            Command::Sweep => "sweep",
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::UnknownSpecies(_) | Error::UnknownUnit(_) => {
            EXIT_USAGE
        }
        _ => EXIT_DOMAIN,
    }
}

/// Applies flag overrides on top of the file config and validates.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &cli.species {
        cfg.species = s.iter().map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
    }
    if let Some(v) = cli.voltage {
        cfg.analysis.voltage = v;
    }
    if let Some(h) = cli.resolution {
        cfg.solver.spacing = h;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        f(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => fs::rename(&tmp, path).map_err(Error::from),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        writeln!(w)?;
        Ok(())
    })
}

/// Collects artifact paths for the summary.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<()> {
        let p = self.path(name);
        write_json(&p, v)
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, |w| {
            writeln!(w, "{header}")?;
            for r in rows {
                writeln!(w, "{r}")?;
            }
            Ok(())
        })
    }

    fn grid(&mut self, stem: &str, f: &crate::field::ScalarField, label: &str) -> Result<()> {
        let p = self.path(&format!("{stem}.bin"));
        write_atomic(&p, |w| f.write_binary(w))?;
        let p = self.path(&format!("{stem}.csv"));
        write_atomic(&p, |w| f.write_csv(w, label))
    }
}

fn solve_field(cfg: &RunConfig, g: &DiskGeometry) -> Result<Arc<UnitField>> {
    Ok(Arc::new(UnitField::solve(g, cfg.solver.resolution(), &cfg.solver.settings())?))
}

/// Characterizes at the configured voltage, optimizing it when set to auto.
fn characterize_at(cfg: &RunConfig, field: Arc<UnitField>, sp: &AtomSpecies, gravity: bool) -> Result<TrapCharacterization> {
    let mut sys = TrapSystem::new(field, cfg.mirror, sp.clone(), 0.0);
    sys.include_gravity = gravity;
    let v = match cfg.analysis.voltage {
        VoltageChoice::Fixed(v) => v,
        VoltageChoice::Auto => optimize_voltage(&sys, (cfg.analysis.v_min, cfg.analysis.v_max))?.v_star,
    };
    let mut c = characterize_system(&sys.with_voltage(v))?;
    if cfg.analysis.volume_threshold_uk != crate::analysis::VOLUME_THRESHOLD_UK {
        let u = total_potential_grid(&sys.with_voltage(v));
        let min = crate::analysis::find_minimum(&u)?;
        let th = EnergyQuantity::from_microkelvin(cfg.analysis.volume_threshold_uk);
        c.volume_200uk = crate::analysis::trap_volume(&u, &min, th).ok();
    }
    Ok(c)
}

fn table_row(sp: &str, g: &DiskGeometry, c: &TrapCharacterization) -> String {
    format!(
        "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.5},{:.5},{:.3},{}",
        sp,
        g.disk_height * 1e6,
        g.disk_radius * 1e6,
        c.applied_voltage,
        c.depth_mhz(),
        c.f_r_khz(),
        c.f_perp_khz(),
        c.eta_r,
        c.eta_perp,
        c.b_at_min * 1e4,
        c.volume_200uk.map(|v| format!("{:.4e}", v * 1e6)).unwrap_or_default(),
    )
}

const TABLE_HEADER: &str = "species,d_um,r_um,V,depth_MHz,fr_kHz,fperp_kHz,eta_r,eta_perp,B_min_G,volume_cm3";

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))
}

fn cmd_solve(cfg: &RunConfig, dump: bool, out: &mut Outputs) -> Result<Value> {
    let g = cfg.geometry.build()?;
    let f = solve_field(cfg, &g)?;
    if dump {
        out.grid("phi", &f.phi, "phi_per_volt")?;
        out.grid("e2", &f.e2, "e2_per_volt2")?;
    }
    Ok(json!({
        "geometry": g,
        "grid": { "n_rho": f.grid.n_rho, "n_z": f.grid.n_z, "h": f.grid.h },
        "iterations": f.iterations,
        "scaled_residual": f.scaled_residual,
    }))
}

fn cmd_characterize(cfg: &RunConfig, dump: bool, out: &mut Outputs) -> Result<Value> {
    let g = cfg.geometry.build()?;
    let f = solve_field(cfg, &g)?;
    let mut results = Vec::new();
    for sp in cfg.species_list()? {
        let c = characterize_at(cfg, f.clone(), &sp, cfg.analysis.include_gravity)?;
        if dump {
            let mut sys = TrapSystem::new(f.clone(), cfg.mirror, sp.clone(), c.applied_voltage);
            sys.include_gravity = cfg.analysis.include_gravity;
            let u = total_potential_grid(&sys).map(|x| x / PLANCK / 1e6);
            out.grid(&format!("potential_{}", sp.name), &u, "U_MHz")?;
        }
        results.push(json!({
            "characterization": c,
            "depth_MHz": c.depth_mhz(),
            "fr_kHz": c.f_r_khz(),
            "fperp_kHz": c.f_perp_khz(),
            "B_min_G": c.b_at_min * 1e4,
        }));
    }
    out.json("characterization.json", &results)?;
    Ok(json!({ "traps": results }))
}

fn cmd_table(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let species = cfg.species_list()?;
    let mut geoms = Vec::new();
    for &d in &cfg.table.heights {
        for &r in &cfg.table.radii {
            geoms.push(cfg.geometry.build_with(r, d)?);
        }
    }
    let fields: Vec<Result<Arc<UnitField>>> = pool(cfg.threads)?.install(|| geoms.par_iter().map(|g| solve_field(cfg, g)).collect());
    let mut rows = Vec::new();
    for sp in &species {
        for (g, f) in geoms.iter().zip(&fields) {
            let f = f.as_ref().map_err(|e| Error::SearchFailure(e.to_string()))?;
            let c = characterize_at(cfg, f.clone(), sp, cfg.analysis.include_gravity)?;
            rows.push(table_row(&sp.name, g, &c));
        }
    }
    out.csv("table.csv", TABLE_HEADER, &rows)?;
    Ok(json!({ "rows": rows.len() }))
}

fn cmd_load(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let g = cfg.geometry.build()?;
    let f = solve_field(cfg, &g)?;
    let lc = &cfg.loading;
    let mut results = Vec::new();
    for sp in cfg.species_list()? {
        let mut sys = TrapSystem::new(f.clone(), cfg.mirror, sp.clone(), 0.0);
        sys.include_gravity = true;
        let v = match cfg.analysis.voltage {
            VoltageChoice::Fixed(v) => v,
            VoltageChoice::Auto => optimize_voltage(&sys, (cfg.analysis.v_min, cfg.analysis.v_max))?.v_star,
        };
        let (r, traj) = run_loading(&lc.cloud, &sys, &lc.ramp(v), &lc.settings(cfg.seed, cfg.threads))?;
        if lc.write_trajectories {
            let rows: Vec<String> = traj.iter().map(trajectory_row).collect();
            out.csv(&format!("trajectories_{}.csv", sp.name), TRAJECTORY_HEADER, &rows)?;
        }
        let yield_ = array_yield(r.capture_fraction, lc.cloud_atoms, g.disk_radius, &lc.array);
        results.push(json!({ "species": sp.name, "v_final": v, "result": r, "atoms": yield_ }));
    }
    out.json("loading.json", &results)?;
    Ok(json!({ "runs": results }))
}

const TRAJECTORY_HEADER: &str =
    "index,x0_m,y0_m,z0_m,vx0_m_s,vy0_m_s,vz0_m_s,weight,on_footprint,x_m,y_m,z_m,vx_m_s,vy_m_s,vz_m_s,fate,captured,final_energy_uK";

fn trajectory_row(t: &TrajectoryRecord) -> String {
    let v6 = |s: Option<&crate::loading::AtomState>| match s {
        Some(s) => s.pos.iter().chain(&s.vel).map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","),
        None => ",,,,,".to_string(),
    };
    format!(
        "{},{},{:e},{},{},{},{},{}",
        t.index,
        v6(Some(&t.initial)),
        t.weight,
        t.on_footprint,
        v6(t.final_state.as_ref()),
        t.fate.map(|f| format!("{f:?}")).unwrap_or_default(),
        t.captured,
        t.final_energy.map(|e| format!("{:e}", EnergyQuantity(e).microkelvin())).unwrap_or_default(),
    )
}

fn cmd_perturb3d(cfg: &RunConfig, dump: bool, out: &mut Outputs) -> Result<Value> {
    let g = cfg.geometry.build()?;
    if !g.has_lead() {
        return Err(Error::invalid("geometry.lead_height", "perturb3d needs a lead"));
    }
    let f = solve_field(cfg, &g)?;
    let pert = LeadPerturbation::solve(f.clone(), &cfg.perturbation.grid)?;
    if dump {
        out.grid("delta_phi", &pert.delta_phi, "delta_phi_per_volt")?;
    }
    let pc = &cfg.perturbation;
    let mhz = |x: f64| EnergyQuantity(x).mhz();
    let mut results = Vec::new();
    for sp in cfg.species_list()? {
        let c = characterize_at(cfg, f.clone(), &sp, false)?;
        let v_pad = g.comp_pad.map_or(0.0, |p| p.voltage);
        let prof = lead_profile(&pert, &sp, cfg.mirror, &c, v_pad, pc.n_angles)?;
        let rows: Vec<String> = prof
            .angles
            .iter()
            .zip(prof.u_min.iter().zip(&prof.depth))
            .map(|(t, (u, d))| {
                let s = |x: &Option<f64>| x.map(|x| format!("{:.6}", mhz(x))).unwrap_or_default();
                format!("{t:.6},{},{}", s(u), s(d))
            })
            .collect();
        out.csv(&format!("profile_{}.csv", sp.name), "theta_rad,U_min_MHz,depth_MHz", &rows)?;
        let tuning = if pert.has_pad() {
            let target = match pc.pad_goal {
                PadGoal::Flat => PadTarget::Flat,
                PadGoal::DipMhz(d) => PadTarget::Dip(EnergyQuantity::from_mhz(d).joules()),
            };
            let t = tune_compensation_pad(&pert, &sp, cfg.mirror, &c, target, pc.pad_range, pc.n_angles)?;
            Some(json!({
                "v_pad": t.v_pad,
                "residual_bump_MHz": mhz(t.residual_bump),
                "grounded_bump_MHz": mhz(t.grounded_bump),
            }))
        } else {
            None
        };
        results.push(json!({
            "species": sp.name,
            "voltage": c.applied_voltage,
            "v_pad": v_pad,
            "depth_ref_MHz": mhz(prof.depth_ref),
            "bump_height_MHz": mhz(prof.bump_height),
            "bump_at_lead_MHz": mhz(prof.bump_at_lead),
            "perturbed_depth_MHz": mhz(prof.perturbed_depth),
            "fractional_loss": prof.fractional_loss,
            "fwhm_arc_m": prof.fwhm_arc,
            "destroyed_angles": prof.destroyed,
            "pad_tuning": tuning,
        }));
    }
    out.json("perturbation.json", &results)?;
    Ok(json!({ "profiles": results, "box_iterations": pert.iterations }))
}

fn cmd_gas(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let g = cfg.geometry.build()?;
    let f = solve_field(cfg, &g)?;
    let gc = &cfg.gas;
    let mut results = Vec::new();
    for sp in cfg.species_list()? {
        let c = characterize_at(cfg, f.clone(), &sp, cfg.analysis.include_gravity)?;
        let omega = gc.omega_perp.unwrap_or(c.omega_perp);
        let crit = gas_criteria(&sp, gc.temperature, omega, c.min_location.0, gc.atom_number, gc.chemical_potential)?;
        results.push(crit);
    }
    out.json("gas.json", &results)?;
    Ok(json!({ "criteria": results }))
}

fn cmd_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let sw = &cfg.sweep;
    let species = cfg.species_list()?;
    let base = cfg.geometry.build()?;
    let shared = match sw.parameter {
        SweepParameter::Voltage | SweepParameter::B0Surface => Some(solve_field(cfg, &base)?),
        _ => None,
    };
    let one = |x: f64| -> Result<Vec<String>> {
        let mut c = cfg.clone();
        let g = match sw.parameter {
            SweepParameter::DiskRadius => cfg.geometry.build_with(x, cfg.geometry.disk_height)?,
            SweepParameter::DiskHeight => cfg.geometry.build_with(cfg.geometry.disk_radius, x)?,
            SweepParameter::Voltage => {
                c.analysis.voltage = VoltageChoice::Fixed(x);
                base
            }
            SweepParameter::B0Surface => {
                c.mirror.b0_surface = x;
                c.mirror.validate()?;
                base
            }
        };
        let f = match &shared {
            Some(f) => f.clone(),
            None => solve_field(&c, &g)?,
        };
        species
            .iter()
            .map(|sp| {
                let t = characterize_at(&c, f.clone(), sp, c.analysis.include_gravity)?;
                Ok(format!("{x:e},{}", table_row(&sp.name, &g, &t)))
            })
            .collect()
    };
    // workers compute, this thread collects and writes in input order
    let rows: Vec<Result<Vec<String>>> = pool(cfg.threads)?.install(|| sw.values.par_iter().map(|&x| one(x)).collect());
    let mut all = Vec::new();
    let mut failures = Vec::new();
    for (x, r) in sw.values.iter().zip(rows) {
        match r {
            Ok(r) => all.extend(r),
            Err(e) => failures.push(json!({ "value": x, "error": e.to_string() })),
        }
    }
    let param = serde_json::to_value(sw.parameter)?;
    let header = format!("{},{TABLE_HEADER}", param.as_str().unwrap_or("value"));
    out.csv("sweep.csv", &header, &all)?;
    if all.is_empty() && !sw.values.is_empty() {
        let first = failures[0]["error"].as_str().unwrap_or_default().to_string();
        return Err(Error::NoMinimum(format!("every sweep value failed, first: {first}")));
    }
    Ok(json!({ "parameter": param, "rows": all.len(), "failures": failures }))
}

fn execute(cli: &Cli, cfg: &RunConfig, out: &mut Outputs) -> Result<Value> {
    match cli.command {
        Command::Solve => cmd_solve(cfg, cli.dump_grid, out),
        Command::Characterize => cmd_characterize(cfg, cli.dump_grid, out),
        Command::Table => cmd_table(cfg, out),
        Command::Load => cmd_load(cfg, out),
        Command::Perturb3d => cmd_perturb3d(cfg, cli.dump_grid, out),
        Command::Gas => cmd_gas(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
    }
}

fn summary(command: &str, code: i32, result: Option<Value>, error: Option<String>, files: &[String]) -> Value {
    json!({
        "command": command,
        "status": if code == EXIT_OK { "ok" } else { "error" },
        "exit_code": code,
        "error": error,
        "result": result,
        "files": files,
    })
}

/// Prints to stdout, ignoring a closed pipe.
fn print_json(s: &Value) {
    let mut o = std::io::stdout().lock();
    let _ = writeln!(o, "{}", serde_json::to_string_pretty(s).unwrap_or_default());
}

fn emit(dir: &Path, s: &Value) {
    print_json(s);
    if let Err(e) = write_json(&dir.join("summary.json"), s) {
        eprintln!("error: could not write summary: {e}");
    }
}

/// Runs one invocation; `argv` includes the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(std::io::stdout(), "{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            print_json(&summary("", EXIT_USAGE, None, Some(e.kind().to_string()), &[]));
            return EXIT_USAGE;
        }
    };
    let name = cli.command.name();
    let fallback_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            emit(&fallback_dir, &summary(name, code, None, Some(e.to_string()), &[]));
            return code;
        }
    };
    let mut out = Outputs {
        dir: cfg.out.clone(),
        files: Vec::new(),
    };
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "seed": cfg.seed,
        "config": cfg,
    });
    let (code, result, error) = match out.json("manifest.json", &manifest).and_then(|_| execute(&cli, &cfg, &mut out)) {
        Ok(v) => (EXIT_OK, Some(v), None),
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code(&e), None, Some(e.to_string()))
        }
    };
    emit(&out.dir, &summary(name, code, result, error, &out.files));
    code
}
