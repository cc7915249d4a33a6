//! C ABI over the ringtrap library.
//!
//! Handles are opaque and owned by the caller: every `*_new`/`*_solve` has a
//! matching `*_free`. Functions return an [`RtStatus`]; on failure the
//! message is available from [`rt_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use ringtrap::analysis::{characterize_system, optimize_voltage, DEFAULT_V_RANGE};
use ringtrap::error::Error;
use ringtrap::geometry::DiskGeometry;
use ringtrap::potential::{MirrorSpec, TrapSystem, UnitField};
use ringtrap::solver::{Resolution, SolverSettings};
use ringtrap::species::species_lookup;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownSpecies = 3,
    ResolutionTooCoarse = 4,
    MemoryBudget = 5,
    NonConvergence = 6,
    NoMinimum = 7,
    NoTrapInRange = 8,
    OutOfDomain = 9,
    InsideConductor = 10,
    Other = 11,
    Panic = 12,
}

impl From<&Error> for RtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::UnknownUnit(_) | Error::BelowMirror(_) => RtStatus::InvalidArgument,
            Error::UnknownSpecies(_) => RtStatus::UnknownSpecies,
            Error::ResolutionTooCoarse { .. } => RtStatus::ResolutionTooCoarse,
            Error::MemoryBudget { .. } => RtStatus::MemoryBudget,
            Error::NonConvergence { .. } => RtStatus::NonConvergence,
            Error::NoMinimum(_) | Error::NonPositiveCurvature(..) => RtStatus::NoMinimum,
            Error::NoTrapInRange { .. } => RtStatus::NoTrapInRange,
            Error::OutOfDomain { .. } => RtStatus::OutOfDomain,
            Error::InsideConductor { .. } => RtStatus::InsideConductor,
            _ => RtStatus::Other,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, mapping errors and panics to a status.
fn guard(f: impl FnOnce() -> Result<(), (RtStatus, String)>) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RtStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RtStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RtStatus, String) {
    (RtStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (RtStatus, String) {
    (RtStatus::NullPointer, format!("{what} is null"))
}

/// Solved unit-voltage field of one disk geometry.
pub struct RtField {
    inner: Arc<UnitField>,
}

/// Field plus mirror and species.
pub struct RtSystem {
    inner: TrapSystem,
}

/// Trap characterization at one voltage. SI units; `volume_m3` is NaN when
/// the threshold lies above the trap depth.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtTrap {
    pub voltage: f64,
    pub rho_min: f64,
    pub z_min: f64,
    pub u_min_j: f64,
    pub depth_j: f64,
    pub depth_mhz: f64,
    pub omega_r: f64,
    pub omega_perp: f64,
    pub mode_r: f64,
    pub mode_perp: f64,
    pub eta_r: f64,
    pub eta_perp: f64,
    pub b_min_t: f64,
    pub volume_m3: f64,
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated,
/// NUL-terminated) and returns its full length without the NUL; 0 if none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Solves the field of a disk of radius `r` at height `d` (m) with grid
/// spacing `spacing` (m) and default everything else.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rt_field_solve(r: f64, d: f64, spacing: f64, out: *mut *mut RtField) -> RtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = DiskGeometry::new(r, d);
        g.validate().map_err(lib)?;
        let f = UnitField::solve(&g, Resolution::Spacing(spacing), &SolverSettings::default()).map_err(lib)?;
        *out = Box::into_raw(Box::new(RtField { inner: Arc::new(f) }));
        Ok(())
    })
}

/// # Safety
/// `field` must be null or come from [`rt_field_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rt_field_free(field: *mut RtField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Grid size and spacing of a solved field.
///
/// # Safety
/// `field` must be a live handle; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rt_field_grid(field: *const RtField, n_rho: *mut usize, n_z: *mut usize, h: *mut f64) -> RtStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        let g = &f.inner.grid;
        if let Some(p) = n_rho.as_mut() {
            *p = g.n_rho;
        }
        if let Some(p) = n_z.as_mut() {
            *p = g.n_z;
        }
        if let Some(p) = h.as_mut() {
            *p = g.h;
        }
        Ok(())
    })
}

/// Builds a trap system from a field, a species name ("Cs", "Rb", "K") and
/// the mirror surface field (T) and period (m). The field handle stays owned
/// by the caller.
///
/// # Safety
/// `field` must be a live handle, `species` a NUL-terminated string and
/// `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn rt_system_new(
    field: *const RtField,
    species: *const c_char,
    b0_surface: f64,
    period_a: f64,
    out: *mut *mut RtSystem,
) -> RtStatus {
    guard(|| {
        let f = field.as_ref().ok_or_else(|| null("field"))?;
        if species.is_null() {
            return Err(null("species"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(species)
            .to_str()
            .map_err(|_| (RtStatus::InvalidArgument, "species is not UTF-8".to_string()))?;
        let sp = species_lookup(name).map_err(lib)?;
        let mirror = MirrorSpec { b0_surface, period_a };
        mirror.validate().map_err(lib)?;
        let sys = TrapSystem::new(f.inner.clone(), mirror, sp, 0.0);
        *out = Box::into_raw(Box::new(RtSystem { inner: sys }));
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or come from [`rt_system_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rt_system_free(sys: *mut RtSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Includes or removes gravity along −z.
///
/// # Safety
/// `sys` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rt_system_set_gravity(sys: *mut RtSystem, on: bool) -> RtStatus {
    guard(|| {
        let s = sys.as_mut().ok_or_else(|| null("sys"))?;
        s.inner.include_gravity = on;
        Ok(())
    })
}

/// Depth-maximizing disk voltage over the default scan range.
///
/// # Safety
/// `sys` must be a live handle and `v_star` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rt_system_optimal_voltage(sys: *const RtSystem, v_star: *mut f64) -> RtStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let v = v_star.as_mut().ok_or_else(|| null("v_star"))?;
        *v = optimize_voltage(&s.inner, DEFAULT_V_RANGE).map_err(lib)?.v_star;
        Ok(())
    })
}

/// Characterizes the trap at `voltage`.
///
/// # Safety
/// `sys` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn rt_system_characterize(sys: *const RtSystem, voltage: f64, out: *mut RtTrap) -> RtStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        if !(voltage.is_finite() && voltage >= 0.0) {
            return Err((RtStatus::InvalidArgument, "voltage must be finite and non-negative".into()));
        }
        let c = characterize_system(&s.inner.with_voltage(voltage)).map_err(lib)?;
        *o = RtTrap {
            voltage,
            rho_min: c.min_location.0,
            z_min: c.min_location.1,
            u_min_j: c.u_min.joules(),
            depth_j: c.depth.joules(),
            depth_mhz: c.depth_mhz(),
            omega_r: c.omega_r,
            omega_perp: c.omega_perp,
            mode_r: c.mode_r,
            mode_perp: c.mode_perp,
            eta_r: c.eta_r,
            eta_perp: c.eta_perp,
            b_min_t: c.b_at_min,
            volume_m3: c.volume_200uk.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Potential (J) and force (N) at a Cartesian point (m) for disk voltage
/// `voltage`. `force` may be null; otherwise it receives three values.
///
/// # Safety
/// `sys` must be a live handle, `u` valid for a write and `force` null or
/// valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn rt_system_potential(
    sys: *const RtSystem,
    voltage: f64,
    x: f64,
    y: f64,
    z: f64,
    u: *mut f64,
    force: *mut f64,
) -> RtStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let u = u.as_mut().ok_or_else(|| null("u"))?;
        let (energy, f) = s.inner.evaluate([x, y, z], voltage).map_err(lib)?;
        *u = energy;
        if !force.is_null() {
            std::ptr::copy_nonoverlapping(f.as_ptr(), force, 3);
        }
        Ok(())
    })
}
