//! Run configuration: a TOML file with nested sections. Every section and key
//! is optional; unknown keys are rejected.
//!
//! ```toml
//! species = ["Cs"]
//! seed = 7
//!
//! [geometry]
//! disk_radius = 10e-6
//! disk_height = 0.6e-6
//!
//! [analysis]
//! voltage = "auto"   # or a number of volts
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::{DEFAULT_V_RANGE, VOLUME_THRESHOLD_UK};
use crate::error::{Error, Result};
use crate::geometry::{CompPad, DiskGeometry};
use crate::loading::{ArraySpec, CloudSpec, LoadingSettings, RampSchedule, RampShape, Trigger};
use crate::potential::MirrorSpec;
use crate::solver::{Backend, Resolution, SolverSettings};
use crate::solver3d::PerturbationSettings;
use crate::species::{AtomSpecies, SpeciesRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub species: Vec<String>,
    /// Extra or overriding species records.
    pub custom_species: Vec<AtomSpecies>,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub mirror: MirrorSpec,
    pub geometry: GeometryConfig,
    pub solver: SolverConfig,
    pub analysis: AnalysisConfig,
    pub loading: LoadingConfig,
    pub perturbation: PerturbationConfig,
    pub gas: GasConfig,
    pub table: TableConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            species: vec!["Cs".into()],
            custom_species: Vec::new(),
            seed: 1,
            out: PathBuf::from("out"),
            threads: 1,
            mirror: MirrorSpec::default(),
            geometry: GeometryConfig::default(),
            solver: SolverConfig::default(),
            analysis: AnalysisConfig::default(),
            loading: LoadingConfig::default(),
            perturbation: PerturbationConfig::default(),
            gas: GasConfig::default(),
            table: TableConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Disk geometry; unset optional fields take the [`DiskGeometry::new`] defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub disk_radius: f64,
    pub disk_height: f64,
    pub disk_thickness: Option<f64>,
    pub stem_radius: Option<f64>,
    pub lead_width: Option<f64>,
    pub lead_height: Option<f64>,
    pub lead_thickness: Option<f64>,
    pub comp_pad: Option<CompPad>,
    pub domain_radius: Option<f64>,
    pub domain_height: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            disk_radius: 10e-6,
            disk_height: 0.6e-6,
            disk_thickness: None,
            stem_radius: None,
            lead_width: None,
            lead_height: None,
            lead_thickness: None,
            comp_pad: None,
            domain_radius: None,
            domain_height: None,
        }
    }
}

impl GeometryConfig {
    /// Geometry for radius `r` and height `d` with this section's overrides.
    pub fn build_with(&self, r: f64, d: f64) -> Result<DiskGeometry> {
        let mut g = DiskGeometry::new(r, d);
        if let Some(t) = self.disk_thickness {
            g.disk_thickness = t;
            let e = DiskGeometry::min_extent(r, d, t);
            g.domain_radius = e;
            g.domain_height = e;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut g.stem_radius, self.stem_radius);
        set(&mut g.lead_width, self.lead_width);
        set(&mut g.lead_height, self.lead_height);
        set(&mut g.lead_thickness, self.lead_thickness);
        set(&mut g.domain_radius, self.domain_radius);
        set(&mut g.domain_height, self.domain_height);
        g.comp_pad = self.comp_pad;
        g.validate()?;
        Ok(g)
    }

    pub fn build(&self) -> Result<DiskGeometry> {
        self.build_with(self.disk_radius, self.disk_height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Target grid spacing, m.
    pub spacing: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig {
            spacing: 50e-9,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            backend: s.backend,
        }
    }
}

impl SolverConfig {
    pub fn resolution(&self) -> Resolution {
        Resolution::Spacing(self.spacing)
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            backend: self.backend,
        }
    }
}

/// Disk voltage: optimized for depth, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VoltageChoice {
    #[default]
    Auto,
    Fixed(f64),
}

impl VoltageChoice {
    pub fn fixed(self) -> Option<f64> {
        match self {
            VoltageChoice::Auto => None,
            VoltageChoice::Fixed(v) => Some(v),
        }
    }
}

impl std::str::FromStr for VoltageChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(VoltageChoice::Auto);
        }
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .map(VoltageChoice::Fixed)
            .ok_or_else(|| Error::invalid("voltage", format!("expected \"auto\" or volts, got '{s}'")))
    }
}

impl Serialize for VoltageChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            VoltageChoice::Auto => s.serialize_str("auto"),
            VoltageChoice::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for VoltageChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string().parse(),
            Raw::Int(v) => v.to_string().parse(),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub voltage: VoltageChoice,
    /// Voltage search range, V.
    pub v_min: f64,
    pub v_max: f64,
    /// μK
    pub volume_threshold_uk: f64,
    pub include_gravity: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            voltage: VoltageChoice::Auto,
            v_min: DEFAULT_V_RANGE.0,
            v_max: DEFAULT_V_RANGE.1,
            volume_threshold_uk: VOLUME_THRESHOLD_UK,
            include_gravity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadingConfig {
    pub cloud: CloudSpec,
    /// s
    pub ramp_duration: f64,
    pub shape: RampShape,
    /// Fixed trigger time after release, s; the cloud turning point if unset.
    pub trigger_time: Option<f64>,
    pub trajectories: usize,
    /// s
    pub settle: f64,
    pub capture_radius_factor: f64,
    /// m
    pub z_start: f64,
    /// s
    pub dt: Option<f64>,
    pub importance: bool,
    pub cloud_atoms: f64,
    pub array: ArraySpec,
    /// Also write one CSV row per trajectory.
    pub write_trajectories: bool,
}

impl Default for LoadingConfig {
    fn default() -> Self {
        let s = LoadingSettings::default();
        let r = RampSchedule::default();
        LoadingConfig {
            cloud: CloudSpec::default(),
            ramp_duration: r.ramp_duration,
            shape: r.shape,
            trigger_time: None,
            trajectories: s.n,
            settle: s.settle,
            capture_radius_factor: s.capture_radius_factor,
            z_start: s.z_start,
            dt: s.dt,
            importance: s.importance,
            cloud_atoms: 1e7,
            array: ArraySpec::default(),
            write_trajectories: false,
        }
    }
}

impl LoadingConfig {
    pub fn ramp(&self, v_final: f64) -> RampSchedule {
        RampSchedule {
            trigger: self.trigger_time.map_or(Trigger::TurningPoint, Trigger::Time),
            ramp_duration: self.ramp_duration,
            shape: self.shape,
            v_final,
        }
    }

    pub fn settings(&self, seed: u64, threads: usize) -> LoadingSettings {
        LoadingSettings {
            n: self.trajectories,
            seed,
            settle: self.settle,
            capture_radius_factor: self.capture_radius_factor,
            z_start: self.z_start,
            dt: self.dt,
            threads,
            histogram_bins: LoadingSettings::default().histogram_bins,
            importance: self.importance,
        }
    }
}

/// Pad tuning goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PadGoal {
    #[default]
    Flat,
    /// Dip of this many MHz at the lead.
    DipMhz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub grid: PerturbationSettings,
    pub n_angles: usize,
    pub pad_goal: PadGoal,
    /// V
    pub pad_range: (f64, f64),
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            grid: PerturbationSettings::default(),
            n_angles: 64,
            pad_goal: PadGoal::Flat,
            pad_range: (-20.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasConfig {
    /// K
    pub temperature: f64,
    pub atom_number: f64,
    /// Transverse angular frequency, rad/s; taken from the trap if unset.
    pub omega_perp: Option<f64>,
    /// Chemical potential, J.
    pub chemical_potential: Option<f64>,
}

impl Default for GasConfig {
    fn default() -> Self {
        GasConfig {
            temperature: 100e-9,
            atom_number: 50.0,
            omega_perp: None,
            chemical_potential: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableConfig {
    /// m
    pub radii: Vec<f64>,
    /// m
    pub heights: Vec<f64>,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            radii: vec![5e-6, 10e-6, 20e-6],
            heights: vec![0.6e-6, 1.0e-6],
        }
    }
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    #[default]
    DiskRadius,
    DiskHeight,
    Voltage,
    B0Surface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    /// SI units of the parameter.
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: SweepParameter::DiskRadius,
            values: vec![5e-6, 10e-6, 20e-6],
        }
    }
}

impl RunConfig {
    pub fn registry(&self) -> Result<SpeciesRegistry> {
        let mut r = SpeciesRegistry::new();
        for s in &self.custom_species {
            r.insert(s.clone())?;
        }
        Ok(r)
    }

    pub fn species_list(&self) -> Result<Vec<AtomSpecies>> {
        let r = self.registry()?;
        self.species.iter().map(|s| r.get(s)).collect()
    }

    /// Checks every section; the first violation is reported.
    pub fn validate(&self) -> Result<()> {
        if self.species.is_empty() {
            return Err(Error::invalid("species", "at least one species is required"));
        }
        self.species_list()?;
        self.mirror.validate()?;
        self.geometry.build()?;
        let s = &self.solver;
        if !(s.spacing.is_finite() && s.spacing > 0.0) {
            return Err(Error::invalid("solver.spacing", "must be positive"));
        }
        if !(s.tolerance.is_finite() && s.tolerance > 0.0) {
            return Err(Error::invalid("solver.tolerance", "must be positive"));
        }
        let a = &self.analysis;
        if !(a.v_min > 0.0 && a.v_max > a.v_min) {
            return Err(Error::invalid("analysis.v_min", "need 0 < v_min < v_max"));
        }
        self.loading.cloud.validate()?;
        self.loading.ramp(1.0).validate()?;
        if self.loading.trajectories == 0 {
            return Err(Error::invalid("loading.trajectories", "must be positive"));
        }
        if self.perturbation.n_angles < 4 {
            return Err(Error::invalid("perturbation.n_angles", "need at least 4"));
        }
        if self.table.radii.iter().chain(&self.table.heights).any(|x| !(*x > 0.0)) {
            return Err(Error::invalid("table", "radii and heights must be positive"));
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a config from TOML text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: String::new(),
        message: e.message().trim().to_string(),
    })?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let line = e.inner().span().map(|s| format!(" (line {})", line_of(text, s.start)));
        Error::Config {
            path: e.path().to_string(),
            message: format!("{}{}", e.inner().message().trim(), line.unwrap_or_default()),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
