use std::sync::{Arc, OnceLock};

use ringtrap::analysis::{characterize_system, optimal_voltage};
use ringtrap::error::Error;
use ringtrap::geometry::DiskGeometry;
use ringtrap::loading::*;
use ringtrap::potential::{MirrorSpec, TrapSystem, UnitField};
use ringtrap::solver::{Resolution, SolverSettings};
use ringtrap::species::AtomSpecies;
use ringtrap::units::{BOHR_MAGNETON, STANDARD_GRAVITY};

fn system() -> &'static (TrapSystem, f64) {
    static S: OnceLock<(TrapSystem, f64)> = OnceLock::new();
    S.get_or_init(|| {
        let g = DiskGeometry::new(10e-6, 0.6e-6);
        let f = Arc::new(UnitField::solve(&g, Resolution::default(), &SolverSettings::default()).unwrap());
        let mut sys = TrapSystem::new(f, MirrorSpec::default(), AtomSpecies::cs133(), 0.0);
        sys.include_gravity = true;
        let v = optimal_voltage(&sys).unwrap().0;
        (sys, v)
    })
}

fn static_ramp(v: f64) -> RampSchedule {
    RampSchedule {
        trigger: Trigger::Time(-1.0),
        v_final: v,
        ..Default::default()
    }
}

/// A cloud that reaches the surface with little energy, so the default
/// ramp captures a measurable fraction.
fn low_drop() -> CloudSpec {
    CloudSpec {
        temperature: 20e-9,
        sigma: [20e-6, 20e-6, 0.2e-3],
        drop_height: 1e-3,
        center_offset: [0.0; 2],
    }
}

#[test]
fn free_fall_without_fields() {
    let (sys, _) = system();
    let ramp = static_ramp(0.0);
    let d = Dynamics {
        system: sys,
        ramp: &ramp,
        t_trigger: 0.0,
        dt_limit: 1.0,
    };
    let z0 = 35e-6;
    let s = AtomState {
        pos: [25e-6, 0.0, z0],
        vel: [0.0; 3],
    };
    let t_end = 1e-3;
    let tr = propagate(&d, s, 0.0, t_end, 1e-6, 1.0, &mut |_, _| {}).unwrap();
    let expect = z0 - 0.5 * STANDARD_GRAVITY * t_end * t_end;
    assert!(((tr.state.pos[2] - expect) / expect).abs() < 1e-8, "{} {expect}", tr.state.pos[2]);
    assert_eq!(tr.fate, Fate::Running);
}

#[test]
fn vertical_drop_turns_where_mirror_balances_energy() {
    let (sys, _) = system();
    let ramp = static_ramp(0.0);
    let d = Dynamics {
        system: sys,
        ramp: &ramp,
        t_trigger: 0.0,
        dt_limit: 1.0,
    };
    let cs = &sys.species;
    let (z0, v0) = (30e-6, -0.2);
    let s = AtomState {
        pos: [30e-6, 0.0, z0],
        vel: [0.0, 0.0, v0],
    };
    let mut z_min = f64::MAX;
    let tr = propagate(&d, s, 0.0, 1e-3, 1e-8, z0, &mut |_, s| z_min = z_min.min(s.pos[2])).unwrap();
    assert_eq!(tr.fate, Fate::Escaped);
    assert!(tr.state.vel[2] > 0.0);
    // closed form: U_mag(z) + m g z = ½ m v₀² + m g z₀
    let mg = cs.mass * STANDARD_GRAVITY;
    let e = 0.5 * cs.mass * v0 * v0 + mg * z0;
    let u = |z: f64| cs.mf_gf * BOHR_MAGNETON * sys.mirror.field_at(z) + mg * z - e;
    let (mut lo, mut hi) = (0.0, z0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if u(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((z_min / lo - 1.0).abs() < 1e-4, "{z_min} {lo}");
}

#[test]
fn step_limit_is_enforced() {
    let (sys, v) = system();
    let ramp = static_ramp(*v);
    let d = Dynamics {
        system: sys,
        ramp: &ramp,
        t_trigger: -1.0,
        dt_limit: 1e-6,
    };
    let s = AtomState {
        pos: [9.6e-6, 0.0, 2.5e-6],
        vel: [0.0; 3],
    };
    let err = propagate(&d, s, 0.0, 1e-4, 2e-6, 1.0, &mut |_, _| {}).unwrap_err();
    assert!(matches!(err, Error::StepTooLarge { .. }));
}

#[test]
fn static_trap_energy_drift() {
    let (sys, v) = system();
    let trap = characterize_system(&sys.with_voltage(*v)).unwrap();
    let ramp = static_ramp(*v);
    let period = 2.0 * std::f64::consts::PI / trap.mode_perp.max(trap.omega_perp);
    let dt = period / 40.0;
    let d = Dynamics {
        system: sys,
        ramp: &ramp,
        t_trigger: -1.0,
        dt_limit: dt,
    };
    // 5 nm keeps the orbit inside one interpolation cell, where U is a
    // smooth cubic and the motion is harmonic to ~1e-3
    let (rho0, z0) = trap.min_location;
    let s = AtomState {
        pos: [rho0 + 5e-9, 0.0, z0 + 5e-9],
        vel: [0.0; 3],
    };
    let u_min = trap.u_min.joules();
    let (n_per, periods) = (40, 1000);
    let mut energies = Vec::with_capacity(n_per * periods);
    let tr = propagate(&d, s, 0.0, dt * (n_per * periods) as f64, dt, 1.0, &mut |t, s| {
        energies.push(d.energy(s, t).unwrap() - u_min)
    })
    .unwrap();
    assert_eq!(tr.fate, Fate::Running);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    // long windows average out the bounded Verlet oscillation and mode beats
    let w = 300 * n_per;
    let first = mean(&energies[..w]);
    let last = mean(&energies[energies.len() - w..]);
    let drift = (last - first).abs() / first;
    assert!(drift < 1e-6, "drift {drift:e}");
}

#[test]
fn ramp_work_matches_energy_change() {
    let (sys, v) = system();
    let trap = characterize_system(&sys.with_voltage(*v)).unwrap();
    let (rho0, z0) = trap.min_location;
    let ramp = RampSchedule {
        trigger: Trigger::Time(0.0),
        v_final: *v,
        ramp_duration: 2e-4,
        shape: RampShape::Smoothstep,
    };
    let mismatch = |dt: f64| {
        let d = Dynamics {
            system: sys,
            ramp: &ramp,
            t_trigger: 0.0,
            dt_limit: 1.0,
        };
        let s = AtomState {
            pos: [rho0 + 0.3e-6, 0.0, z0 + 0.5e-6],
            vel: [0.0, 0.01, -0.02],
        };
        let e0 = d.energy(&s, 0.0).unwrap();
        let mut work = 0.0;
        let mut prev = (0.0, d.potential_rate(s.pos, 0.0));
        let tr = propagate(&d, s, 0.0, 2e-4, dt, 1.0, &mut |t, s| {
            let r = d.potential_rate(s.pos, t);
            work += 0.5 * (prev.1 + r) * (t - prev.0);
            prev = (t, r);
        })
        .unwrap();
        assert_eq!(tr.fate, Fate::Running);
        let e1 = d.energy(&tr.state, tr.t).unwrap();
        ((e1 - e0) - work).abs() / work.abs()
    };
    let coarse = mismatch(2e-7);
    let fine = mismatch(1e-7);
    assert!(coarse < 5e-3, "{coarse:e}");
    // second order: halving dt cuts the mismatch roughly fourfold
    assert!(fine < coarse / 2.5, "{coarse:e} {fine:e}");
}

#[test]
fn zero_voltage_captures_nothing() {
    let (sys, _) = system();
    let ramp = RampSchedule {
        v_final: 0.0,
        ..Default::default()
    };
    // the trap at V = 0 has no minimum, so characterization fails upstream
    let settings = LoadingSettings {
        n: 500,
        ..Default::default()
    };
    match run_loading(&low_drop(), sys, &ramp, &settings) {
        Ok((r, _)) => assert_eq!(r.n_captured, 0),
        Err(_) => {}
    }
}

#[test]
fn loading_is_deterministic_across_threads() {
    let (sys, v) = system();
    let ramp = RampSchedule {
        v_final: *v,
        ..Default::default()
    };
    let base = LoadingSettings {
        n: 3000,
        seed: 42,
        ..Default::default()
    };
    let (a, ra) = run_loading(&low_drop(), sys, &ramp, &base).unwrap();
    let (b, rb) = run_loading(&low_drop(), sys, &ramp, &LoadingSettings { threads: 3, ..base }).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(a.n_captured > 0);
    let (c, _) = run_loading(&low_drop(), sys, &ramp, &LoadingSettings { seed: 43, ..base }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn slow_ramps_capture_less() {
    let (sys, v) = system();
    let settings = LoadingSettings {
        n: 4000,
        ..Default::default()
    };
    let mut last = f64::INFINITY;
    for tau in [2e-4, 2e-3, 2e-2] {
        let ramp = RampSchedule {
            v_final: *v,
            ramp_duration: tau,
            ..Default::default()
        };
        let (r, _) = run_loading(&low_drop(), sys, &ramp, &settings).unwrap();
        assert!(r.capture_fraction <= last, "{tau} {}", r.capture_fraction);
        last = r.capture_fraction;
        if tau == 2e-2 {
            assert!(r.capture_fraction < 1e-3);
        }
    }
}

#[test]
fn importance_sampling_agrees_with_plain_sampling() {
    let (sys, v) = system();
    let ramp = RampSchedule {
        v_final: *v,
        ..Default::default()
    };
    let cloud = low_drop();
    let on = LoadingSettings {
        n: 4000,
        seed: 5,
        ..Default::default()
    };
    let (a, _) = run_loading(&cloud, sys, &ramp, &on).unwrap();
    // plain sampling with the same number of trajectories on the footprint
    let plain_n = ((on.n as f64) * a.importance_weight_sum.recip()) as usize;
    let off = LoadingSettings {
        n: plain_n,
        seed: 6,
        importance: false,
        ..Default::default()
    };
    let (b, _) = run_loading(&cloud, sys, &ramp, &off).unwrap();
    assert!(a.n_captured >= 10 && b.n_captured >= 10, "{} {}", a.n_captured, b.n_captured);
    let sigma = a.cloud_fraction_stderr.hypot(b.cloud_fraction_stderr);
    assert!(
        (a.cloud_fraction - b.cloud_fraction).abs() < 3.0 * sigma,
        "{} ± {} vs {} ± {}",
        a.cloud_fraction,
        a.cloud_fraction_stderr,
        b.cloud_fraction,
        b.cloud_fraction_stderr
    );
    assert!(a.capture_ci.0 <= a.capture_fraction && a.capture_fraction <= a.capture_ci.1);
    assert_eq!(a.energy_histogram.iter().map(|b| b.count).sum::<usize>(), a.n_captured);
}
