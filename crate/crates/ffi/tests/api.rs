use std::ffi::{CStr, CString};
use std::ptr;

use coevo_ffi::*;

fn config() -> CoevoConfig {
    let mut c = std::mem::MaybeUninit::<CoevoConfig>::uninit();
    assert_eq!(unsafe { coevo_config_default(c.as_mut_ptr()) }, CoevoStatus::Ok);
    let mut c = unsafe { c.assume_init() };
    c.seed = 7;
    c
}

fn new_sim(c: &CoevoConfig) -> *mut CoevoSimulation {
    let mut sim = ptr::null_mut();
    let s = unsafe { coevo_simulation_new(c, ptr::null(), &mut sim) };
    assert_eq!(s, CoevoStatus::Ok, "{}", last_error());
    assert!(!sim.is_null());
    sim
}

fn last_error() -> String {
    let p = coevo_last_error_message();
    if p.is_null() {
        return String::new();
    }
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn rows(sim: *const CoevoSimulation) -> Vec<CoevoMetricsRow> {
    let n = unsafe { coevo_simulation_row_count(sim) };
    (0..n)
        .map(|i| {
            let mut r = std::mem::MaybeUninit::uninit();
            assert_eq!(unsafe { coevo_simulation_row(sim, i, r.as_mut_ptr()) }, CoevoStatus::Ok);
            unsafe { r.assume_init() }
        })
        .collect()
}

#[test]
fn defaults_match_core() {
    let c = config();
    let d = coevo::io::default_config();
    assert_eq!(c.virus_initial_population, d.virus_initial_population);
    assert_eq!(c.policy_size as usize, d.policy_size);
    assert_eq!(c.base_rate, d.base_rate);
    assert_eq!(c.tmax, d.tmax);
    assert_eq!(c.regime, CoevoRegime::Coevolution as u32);
    assert_eq!(unsafe { coevo_config_validate(&c) }, CoevoStatus::Ok);
}

#[test]
fn stepping_matches_core_run() {
    let c = config();
    let sim = new_sim(&c);
    let mut stepped = Vec::new();
    loop {
        let mut row = std::mem::MaybeUninit::uninit();
        match unsafe { coevo_simulation_step(sim, row.as_mut_ptr()) } {
            CoevoStatus::Ok => stepped.push(unsafe { row.assume_init() }),
            CoevoStatus::Finished => break,
            s => panic!("step failed: {s:?} {}", last_error()),
        }
    }
    assert_eq!(unsafe { coevo_simulation_step(sim, ptr::null_mut()) }, CoevoStatus::Finished);

    let core = coevo::run(&coevo::io::default_config().with_seed(7), &coevo::io::default_effect_spec()).unwrap();
    let recorded = rows(sim);
    assert_eq!(recorded.len(), core.rows.len());
    assert_eq!(stepped.len(), core.rows.len());
    for ((a, b), r) in recorded.iter().zip(&stepped).zip(&core.rows) {
        assert_eq!(a.t, r.t);
        assert_eq!(b.t, r.t);
        assert_eq!(a.total_viruses, r.total_viruses);
        assert_eq!(a.n_strains, r.n_strains);
        assert_eq!(a.has_mean_virus_r, r.mean_virus_r.is_some());
        assert_eq!(a.mean_virus_r.to_bits(), r.mean_virus_r.unwrap_or(f64::NAN).to_bits());
        assert_eq!(a.mean_policy_reduction, r.mean_policy_reduction);
        assert_eq!(a.extinct, r.extinct);
    }

    let mut term = std::mem::MaybeUninit::<CoevoTermination>::uninit();
    assert_eq!(unsafe { coevo_simulation_termination(sim, term.as_mut_ptr()) }, CoevoStatus::Ok);
    let term = unsafe { term.assume_init() };
    assert_ne!(term.kind, CoevoTerminationKind::Running);
    unsafe { coevo_simulation_free(sim) };
}

#[test]
fn absent_values_are_nan_with_flags() {
    let mut c = config();
    c.base_rate = 0.05;
    c.regime = CoevoRegime::PolicyOnly as u32;
    let sim = new_sim(&c);
    assert_eq!(unsafe { coevo_simulation_run(sim) }, CoevoStatus::Ok);
    let last = *rows(sim).last().unwrap();
    assert!(last.extinct);
    assert!(!last.has_mean_virus_r && last.mean_virus_r.is_nan());
    assert!(!last.has_freq_best_gene && last.freq_best_gene.is_nan());

    let mut term = std::mem::MaybeUninit::<CoevoTermination>::uninit();
    unsafe { coevo_simulation_termination(sim, term.as_mut_ptr()) };
    let term = unsafe { term.assume_init() };
    assert_eq!(term.kind, CoevoTerminationKind::Extinct);
    assert_eq!(term.t, last.t);
    unsafe { coevo_simulation_free(sim) };
}

#[test]
fn write_matches_core_output() {
    let c = config();
    let sim = new_sim(&c);
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("ffi").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { coevo_simulation_write(sim, out.as_ptr()) }, CoevoStatus::InvalidArgument);
    assert_eq!(unsafe { coevo_simulation_run(sim) }, CoevoStatus::Ok);
    assert_eq!(unsafe { coevo_simulation_write(sim, out.as_ptr()) }, CoevoStatus::Ok, "{}", last_error());
    unsafe { coevo_simulation_free(sim) };

    let core = coevo::run(&coevo::io::default_config().with_seed(7), &coevo::io::default_effect_spec()).unwrap();
    coevo::io::write_run(&core, &dir.path().join("core")).unwrap();
    for f in [coevo::io::METRICS_FILE, coevo::io::METADATA_FILE] {
        let a = std::fs::read(dir.path().join("ffi").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("core").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn intervals_constructor_checks_inputs() {
    let mut c = config();
    c.policy_size = 2;
    let lo = [0.01, 0.02];
    let hi = [0.03, 0.04];
    let mut sim = ptr::null_mut();
    let s = unsafe { coevo_simulation_new_with_intervals(&c, lo.as_ptr(), hi.as_ptr(), 2, &mut sim) };
    assert_eq!(s, CoevoStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { coevo_simulation_run(sim) }, CoevoStatus::Ok);
    assert!(unsafe { coevo_simulation_row_count(sim) } > 0);
    unsafe { coevo_simulation_free(sim) };

    let bad_hi = [0.03, 0.0];
    let mut sim = ptr::null_mut();
    let s = unsafe { coevo_simulation_new_with_intervals(&c, lo.as_ptr(), bad_hi.as_ptr(), 2, &mut sim) };
    assert_eq!(s, CoevoStatus::EffectSpec);
    assert!(sim.is_null());
    assert!(last_error().contains("ci_low"), "{}", last_error());

    let s = unsafe { coevo_simulation_new_with_intervals(&c, lo.as_ptr(), hi.as_ptr(), 1, &mut sim) };
    assert_eq!(s, CoevoStatus::Config);
}

#[test]
fn errors_are_reported() {
    let mut c = config();
    c.policy_population_size = 3;
    assert_eq!(unsafe { coevo_config_validate(&c) }, CoevoStatus::Config);
    assert!(last_error().contains("policy_population_size"));

    let mut c = config();
    c.regime = 9;
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { coevo_simulation_new(&c, ptr::null(), &mut sim) }, CoevoStatus::InvalidArgument);
    assert!(sim.is_null());

    assert_eq!(unsafe { coevo_config_default(ptr::null_mut()) }, CoevoStatus::NullPointer);
    assert_eq!(unsafe { coevo_simulation_step(ptr::null_mut(), ptr::null_mut()) }, CoevoStatus::NullPointer);
    assert_eq!(unsafe { coevo_simulation_row_count(ptr::null()) }, 0);
    unsafe { coevo_simulation_free(ptr::null_mut()) };

    let missing = CString::new("/nonexistent/effects.csv").unwrap();
    let c = config();
    assert_eq!(unsafe { coevo_simulation_new(&c, missing.as_ptr(), &mut sim) }, CoevoStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "tmax = \"soon\"\n").unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let mut out = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { coevo_config_load(p.as_ptr(), out.as_mut_ptr()) }, CoevoStatus::Parse);
}

#[test]
fn files_constructor_keeps_weights() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.toml");
    let weights = vec!["0"; 46].join(", ");
    std::fs::write(&path, format!("seed = 3\nmeasure_weights = [{weights}]\n")).unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();

    let mut out = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { coevo_config_load(p.as_ptr(), out.as_mut_ptr()) }, CoevoStatus::Config);

    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { coevo_simulation_from_files(p.as_ptr(), ptr::null(), &mut sim) }, CoevoStatus::Ok);
    assert_eq!(unsafe { coevo_simulation_run(sim) }, CoevoStatus::Ok);
    assert!(rows(sim).iter().all(|r| r.mean_policy_reduction == 0.0));
    unsafe { coevo_simulation_free(sim) };
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(coevo_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
