//! C ABI over the `coevo` simulator.
//!
//! A simulation lives behind an opaque `CoevoSimulation` handle. Every
//! fallible call returns a [`CoevoStatus`]; on failure the message is kept
//! per thread and read with [`coevo_last_error_message`].
//!
//! Absent metric values are reported as NaN with a matching `has_*` flag.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use coevo::{io, Error, MeasureInterval, MetricsRow, OffspringMode, PolicyEffectSpec, Regime, SimConfig, Simulation, Termination};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoevoStatus {
    Ok = 0,
    /// The run has terminated; no row was produced.
    Finished = 1,
    NullPointer = 2,
    InvalidArgument = 3,
    Config = 4,
    EffectSpec = 5,
    Io = 6,
    Parse = 7,
    Overflow = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoevoRegime {
    Coevolution = 0,
    PolicyOnly = 1,
    VirusOnly = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoevoOffspringMode {
    Stochastic = 0,
    Expected = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoevoTerminationKind {
    Running = 0,
    Completed = 1,
    Extinct = 2,
    Overflow = 3,
}

/// Scalar run parameters. Measure weights are not carried here; use
/// `coevo_simulation_from_files` for configs that set them.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CoevoConfig {
    pub virus_initial_population: u64,
    pub virus_size: u32,
    pub policy_population_size: u32,
    pub policy_size: u32,
    pub base_rate: f64,
    pub tmax: u32,
    pub policy_crossover_rate: f64,
    pub policy_mutation_rate: f64,
    pub virus_mutation_rate: f64,
    /// A `CoevoRegime` value.
    pub regime: u32,
    /// A `CoevoOffspringMode` value.
    pub mode: u32,
    pub population_cap: u64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CoevoMetricsRow {
    pub t: u32,
    pub total_viruses: u64,
    pub n_strains: u64,
    pub mean_virus_r: f64,
    pub mean_policy_reduction: f64,
    pub mean_effective_r: f64,
    pub freq_best_gene: f64,
    pub has_mean_virus_r: bool,
    pub has_mean_effective_r: bool,
    pub has_freq_best_gene: bool,
    pub extinct: bool,
    pub overflowed: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CoevoTermination {
    pub kind: CoevoTerminationKind,
    /// Period at which the run stopped; 0 while running.
    pub t: u32,
}

/// Opaque simulation handle.
pub struct CoevoSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CoevoStatus, msg: impl Into<String>) -> CoevoStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> CoevoStatus {
    match err {
        Error::Config(_) | Error::MeasureCount { .. } => CoevoStatus::Config,
        Error::EffectSpec { .. } => CoevoStatus::EffectSpec,
        Error::Io { .. } => CoevoStatus::Io,
        Error::Parse { .. } => CoevoStatus::Parse,
        Error::Overflow { .. } => CoevoStatus::Overflow,
        Error::Logic(_) => CoevoStatus::Internal,
    }
}

fn from_error(err: Error) -> CoevoStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, turning a panic into `Internal`.
fn guard(f: impl FnOnce() -> CoevoStatus) -> CoevoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CoevoStatus::Internal, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<Option<PathBuf>, CoevoStatus> {
    if p.is_null() {
        return Ok(None);
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Some(PathBuf::from(s))),
        Err(_) => Err(fail(CoevoStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

impl From<Regime> for CoevoRegime {
    fn from(r: Regime) -> Self {
        match r {
            Regime::Coevolution => Self::Coevolution,
            Regime::PolicyOnly => Self::PolicyOnly,
            Regime::VirusOnly => Self::VirusOnly,
        }
    }
}

impl From<OffspringMode> for CoevoOffspringMode {
    fn from(m: OffspringMode) -> Self {
        match m {
            OffspringMode::Stochastic => Self::Stochastic,
            OffspringMode::Expected => Self::Expected,
        }
    }
}

impl From<&SimConfig> for CoevoConfig {
    fn from(c: &SimConfig) -> Self {
        Self {
            virus_initial_population: c.virus_initial_population,
            virus_size: u32::try_from(c.virus_size).unwrap_or(u32::MAX),
            policy_population_size: u32::try_from(c.policy_population_size).unwrap_or(u32::MAX),
            policy_size: u32::try_from(c.policy_size).unwrap_or(u32::MAX),
            base_rate: c.base_rate,
            tmax: c.tmax,
            policy_crossover_rate: c.policy_crossover_rate,
            policy_mutation_rate: c.policy_mutation_rate,
            virus_mutation_rate: c.virus_mutation_rate,
            regime: CoevoRegime::from(c.regime) as u32,
            mode: CoevoOffspringMode::from(c.mode) as u32,
            population_cap: c.population_cap,
            seed: c.seed,
        }
    }
}

impl TryFrom<&CoevoConfig> for SimConfig {
    type Error = CoevoStatus;

    fn try_from(c: &CoevoConfig) -> Result<Self, CoevoStatus> {
        let regime = match c.regime {
            0 => Regime::Coevolution,
            1 => Regime::PolicyOnly,
            2 => Regime::VirusOnly,
            r => return Err(fail(CoevoStatus::InvalidArgument, format!("unknown regime {r}"))),
        };
        let mode = match c.mode {
            0 => OffspringMode::Stochastic,
            1 => OffspringMode::Expected,
            m => return Err(fail(CoevoStatus::InvalidArgument, format!("unknown offspring mode {m}"))),
        };
        Ok(Self {
            virus_initial_population: c.virus_initial_population,
            virus_size: c.virus_size as usize,
            policy_population_size: c.policy_population_size as usize,
            policy_size: c.policy_size as usize,
            base_rate: c.base_rate,
            tmax: c.tmax,
            policy_crossover_rate: c.policy_crossover_rate,
            policy_mutation_rate: c.policy_mutation_rate,
            virus_mutation_rate: c.virus_mutation_rate,
            regime,
            mode,
            population_cap: c.population_cap,
            seed: c.seed,
            measure_weights: Vec::new(),
        })
    }
}

impl From<&MetricsRow> for CoevoMetricsRow {
    fn from(r: &MetricsRow) -> Self {
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        Self {
            t: r.t,
            total_viruses: r.total_viruses,
            n_strains: r.n_strains,
            mean_virus_r: opt(r.mean_virus_r),
            mean_policy_reduction: r.mean_policy_reduction,
            mean_effective_r: opt(r.mean_effective_r),
            freq_best_gene: opt(r.freq_best_gene),
            has_mean_virus_r: r.mean_virus_r.is_some(),
            has_mean_effective_r: r.mean_effective_r.is_some(),
            has_freq_best_gene: r.freq_best_gene.is_some(),
            extinct: r.extinct,
            overflowed: r.overflowed,
        }
    }
}

fn termination_of(t: Option<Termination>) -> CoevoTermination {
    let (kind, t) = match t {
        None => (CoevoTerminationKind::Running, 0),
        Some(Termination::Completed) => (CoevoTerminationKind::Completed, 0),
        Some(Termination::ExtinctAt(t)) => (CoevoTerminationKind::Extinct, t),
        Some(Termination::OverflowAt(t)) => (CoevoTerminationKind::Overflow, t),
    };
    CoevoTermination { kind, t }
}

fn into_handle(sim: Simulation, out: *mut *mut CoevoSimulation) -> CoevoStatus {
    let handle = Box::new(CoevoSimulation { inner: sim });
    // SAFETY: caller checked `out` for null.
    unsafe { *out = Box::into_raw(handle) };
    CoevoStatus::Ok
}

/// Message for the last failed call on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn coevo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn coevo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fills `out` with the default parameters.
///
/// # Safety
/// `out` must be NULL or point to writable storage for a `CoevoConfig`.
#[no_mangle]
pub unsafe extern "C" fn coevo_config_default(out: *mut CoevoConfig) -> CoevoStatus {
    if out.is_null() {
        return fail(CoevoStatus::NullPointer, "out is NULL");
    }
    *out = CoevoConfig::from(&io::default_config());
    CoevoStatus::Ok
}

/// Reads a TOML config into `out`. Fails with `Config` if the file sets
/// measure weights, which `CoevoConfig` cannot hold.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for a `CoevoConfig`.
#[no_mangle]
pub unsafe extern "C" fn coevo_config_load(path: *const c_char, out: *mut CoevoConfig) -> CoevoStatus {
    guard(|| {
        if out.is_null() {
            return fail(CoevoStatus::NullPointer, "out is NULL");
        }
        let path = match path_arg(path) {
            Ok(Some(p)) => p,
            Ok(None) => return fail(CoevoStatus::NullPointer, "path is NULL"),
            Err(s) => return s,
        };
        match io::load_config(&path) {
            Ok(cfg) if !cfg.measure_weights.is_empty() => fail(
                CoevoStatus::Config,
                "config sets measure_weights; load it with coevo_simulation_from_files",
            ),
            Ok(cfg) => {
                *out = CoevoConfig::from(&cfg);
                CoevoStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Checks `config` without building a simulation.
///
/// # Safety
/// `config` must be NULL or point to a valid `CoevoConfig`.
#[no_mangle]
pub unsafe extern "C" fn coevo_config_validate(config: *const CoevoConfig) -> CoevoStatus {
    let Some(config) = config.as_ref() else {
        return fail(CoevoStatus::NullPointer, "config is NULL");
    };
    match SimConfig::try_from(config) {
        Ok(cfg) => match cfg.validate() {
            Ok(()) => CoevoStatus::Ok,
            Err(e) => from_error(e),
        },
        Err(s) => s,
    }
}

/// Builds a simulation. `effects_path` names an effect-interval CSV; NULL
/// selects the bundled synthetic spec.
///
/// # Safety
/// `config` must point to a valid `CoevoConfig`, `effects_path` must be NULL
/// or NUL-terminated, and `out` must point to writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_new(
    config: *const CoevoConfig,
    effects_path: *const c_char,
    out: *mut *mut CoevoSimulation,
) -> CoevoStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return fail(CoevoStatus::NullPointer, "config is NULL");
        };
        if out.is_null() {
            return fail(CoevoStatus::NullPointer, "out is NULL");
        }
        let cfg = match SimConfig::try_from(config) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let spec = match path_arg(effects_path) {
            Ok(Some(p)) => io::load_effect_spec(&p, Some(cfg.policy_size)),
            Ok(None) => Ok(io::default_effect_spec()),
            Err(s) => return s,
        };
        match spec.and_then(|spec| Simulation::new(&cfg, &spec)) {
            Ok(sim) => into_handle(sim, out),
            Err(e) => from_error(e),
        }
    })
}

/// Builds a simulation from `n_measures` effect intervals given as two
/// parallel arrays.
///
/// # Safety
/// `config` must point to a valid `CoevoConfig`; `ci_low` and `ci_high`
/// must each point to `n_measures` readable doubles; `out` must point to
/// writable storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_new_with_intervals(
    config: *const CoevoConfig,
    ci_low: *const f64,
    ci_high: *const f64,
    n_measures: usize,
    out: *mut *mut CoevoSimulation,
) -> CoevoStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return fail(CoevoStatus::NullPointer, "config is NULL");
        };
        if out.is_null() || ci_low.is_null() || ci_high.is_null() {
            return fail(CoevoStatus::NullPointer, "interval arrays and out must not be NULL");
        }
        let lo = std::slice::from_raw_parts(ci_low, n_measures);
        let hi = std::slice::from_raw_parts(ci_high, n_measures);
        let measures = lo
            .iter()
            .zip(hi)
            .enumerate()
            .map(|(i, (&ci_low, &ci_high))| MeasureInterval {
                name: format!("measure_{:02}", i + 1),
                ci_low,
                ci_high,
            })
            .collect();
        let cfg = match SimConfig::try_from(config) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match PolicyEffectSpec::new(measures).and_then(|spec| Simulation::new(&cfg, &spec)) {
            Ok(sim) => into_handle(sim, out),
            Err(e) => from_error(e),
        }
    })
}

/// Builds a simulation from a TOML config and an effect CSV. Either path may
/// be NULL to use the bundled default.
///
/// # Safety
/// Both paths must be NULL or NUL-terminated; `out` must point to writable
/// storage for a pointer.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_from_files(
    config_path: *const c_char,
    effects_path: *const c_char,
    out: *mut *mut CoevoSimulation,
) -> CoevoStatus {
    guard(|| {
        if out.is_null() {
            return fail(CoevoStatus::NullPointer, "out is NULL");
        }
        let cfg = match path_arg(config_path) {
            Ok(Some(p)) => io::load_config(&p),
            Ok(None) => Ok(io::default_config()),
            Err(s) => return s,
        };
        let cfg = match cfg {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        let spec = match path_arg(effects_path) {
            Ok(Some(p)) => io::load_effect_spec(&p, Some(cfg.policy_size)),
            Ok(None) => Ok(io::default_effect_spec()),
            Err(s) => return s,
        };
        match spec.and_then(|spec| Simulation::new(&cfg, &spec)) {
            Ok(sim) => into_handle(sim, out),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a simulation. NULL is ignored.
///
/// # Safety
/// `sim` must be NULL or a handle from a `coevo_simulation_*` constructor
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_free(sim: *mut CoevoSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Writes the effective parameters of `sim` into `out`.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_config(sim: *const CoevoSimulation, out: *mut CoevoConfig) -> CoevoStatus {
    let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
        return fail(CoevoStatus::NullPointer, "sim and out must not be NULL");
    };
    *out = CoevoConfig::from(sim.inner.config());
    CoevoStatus::Ok
}

/// Advances one period. On `Ok`, `row_out` (if not NULL) holds the row just
/// recorded. Returns `Finished` once the run has terminated.
///
/// # Safety
/// `sim` must be a live handle; `row_out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_step(sim: *mut CoevoSimulation, row_out: *mut CoevoMetricsRow) -> CoevoStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(CoevoStatus::NullPointer, "sim is NULL");
        };
        match sim.inner.step() {
            Ok(Some(row)) => {
                if !row_out.is_null() {
                    *row_out = CoevoMetricsRow::from(&row);
                }
                CoevoStatus::Ok
            }
            Ok(None) => CoevoStatus::Finished,
            Err(e) => from_error(e),
        }
    })
}

/// Steps until the run terminates.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_run(sim: *mut CoevoSimulation) -> CoevoStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(CoevoStatus::NullPointer, "sim is NULL");
        };
        match sim.inner.run_to_end() {
            Ok(()) => CoevoStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Number of rows recorded so far, 0 for NULL.
///
/// # Safety
/// `sim` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_row_count(sim: *const CoevoSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.inner.rows().len())
}

/// Copies row `index` into `out`.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_row(
    sim: *const CoevoSimulation,
    index: usize,
    out: *mut CoevoMetricsRow,
) -> CoevoStatus {
    let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
        return fail(CoevoStatus::NullPointer, "sim and out must not be NULL");
    };
    match sim.inner.rows().get(index) {
        Some(row) => {
            *out = CoevoMetricsRow::from(row);
            CoevoStatus::Ok
        }
        None => fail(
            CoevoStatus::InvalidArgument,
            format!("row {index} out of range ({} rows)", sim.inner.rows().len()),
        ),
    }
}

/// How the run ended, or `Running`.
///
/// # Safety
/// `sim` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_termination(
    sim: *const CoevoSimulation,
    out: *mut CoevoTermination,
) -> CoevoStatus {
    let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
        return fail(CoevoStatus::NullPointer, "sim and out must not be NULL");
    };
    *out = termination_of(sim.inner.termination());
    CoevoStatus::Ok
}

/// Writes `metrics.csv` and `run.json` for a finished run into `dir`,
/// creating it if needed. Fails with `InvalidArgument` while running.
///
/// # Safety
/// `sim` must be a live handle; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn coevo_simulation_write(sim: *const CoevoSimulation, dir: *const c_char) -> CoevoStatus {
    guard(|| {
        let Some(sim) = sim.as_ref() else {
            return fail(CoevoStatus::NullPointer, "sim is NULL");
        };
        let dir = match path_arg(dir) {
            Ok(Some(p)) => p,
            Ok(None) => return fail(CoevoStatus::NullPointer, "dir is NULL"),
            Err(s) => return s,
        };
        let Some(result) = sim.inner.result() else {
            return fail(CoevoStatus::InvalidArgument, "run has not terminated");
        };
        match io::write_run(&result, &dir) {
            Ok(()) => CoevoStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}
