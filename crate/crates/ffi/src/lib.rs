//! C ABI over `ednet`.
//!
//! Scenarios and rate vectors cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible call
//! returns an [`EdnStatus`]; on failure a message is available from
//! [`edn_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ednet::error::{NetError, SolveError};
use ednet::gradest::{estimate_utility, EstimatorParams, Truncation};
use ednet::netmodel::{
    build_scenario, compute_theory_constants, feasibility_check, RateVector, Scenario, ScenarioConfig,
};
use ednet::optimize::{solve, Algorithm, SolverParams};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    ConfigError = 5,
    SolverError = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdnAlgorithm {
    Fw = 0,
    Pga = 1,
    MaxSum = 2,
    MaxAlpha = 3,
}

impl From<EdnAlgorithm> for Algorithm {
    fn from(a: EdnAlgorithm) -> Self {
        match a {
            EdnAlgorithm::Fw => Algorithm::Fw,
            EdnAlgorithm::Pga => Algorithm::Pga,
            EdnAlgorithm::MaxSum => Algorithm::MaxSum,
            EdnAlgorithm::MaxAlpha => Algorithm::MaxAlpha,
        }
    }
}

/// Solver settings. Fill with `edn_solver_params_default` and override.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EdnSolverParams {
    pub algorithm: EdnAlgorithm,
    pub delta: f64,
    pub samples: usize,
    pub trunc_mult: f64,
    pub utility_samples: usize,
    pub seed: u64,
    pub pga_iterations: usize,
    pub pga_step_scale: f64,
    pub projection_iterations: usize,
    pub alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EdnTheoryConstants {
    pub lambda_max: f64,
    pub g_max: f64,
    pub lipschitz: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EdnScenarioCounts {
    pub nodes: usize,
    pub edges: usize,
    pub sources: usize,
    pub learners: usize,
    pub features: usize,
    pub types: usize,
    /// Length of a rate vector for this scenario.
    pub num_vars: usize,
}

/// Opaque scenario handle.
pub struct EdnScenario(Scenario);

/// Opaque rate-vector handle.
pub struct EdnRates(RateVector);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EdnStatus, msg: impl Into<String>) -> EdnStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> EdnStatus>(f: F) -> EdnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(EdnStatus::Panic, "internal panic"),
    }
}

fn net_status(e: &NetError) -> EdnStatus {
    match e {
        NetError::Io(_) => EdnStatus::IoError,
        NetError::FileParse { .. } => EdnStatus::ParseError,
        NetError::Config { .. } | NetError::UnsupportedKind(_) => EdnStatus::ConfigError,
        _ => EdnStatus::InvalidArgument,
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, EdnStatus> {
    if p.is_null() {
        return Err(fail(EdnStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EdnStatus::InvalidArgument, "string is not valid UTF-8"))
}

unsafe fn emit_scenario(s: Scenario, out: *mut *mut EdnScenario) -> EdnStatus {
    *out = Box::into_raw(Box::new(EdnScenario(s)));
    EdnStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn edn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn edn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn edn_solver_params_default(out: *mut EdnSolverParams) -> EdnStatus {
    if out.is_null() {
        return fail(EdnStatus::NullPointer, "out is null");
    }
    let d = SolverParams::default();
    let m = match d.estimator.truncation {
        Truncation::Multiplier(m) => m,
        Truncation::Fixed(_) => 2.0,
    };
    *out = EdnSolverParams {
        algorithm: EdnAlgorithm::Fw,
        delta: d.delta,
        samples: d.estimator.samples,
        trunc_mult: m,
        utility_samples: d.estimator.utility_samples,
        seed: d.seed,
        pga_iterations: d.pga_iterations,
        pga_step_scale: d.pga_step_scale,
        projection_iterations: d.projection_iterations,
        alpha: d.alpha,
    };
    EdnStatus::Ok
}

/// Parses a materialized scenario document.
#[no_mangle]
pub unsafe extern "C" fn edn_scenario_from_json(
    json: *const c_char,
    out: *mut *mut EdnScenario,
) -> EdnStatus {
    guard(|| {
        if out.is_null() {
            return fail(EdnStatus::NullPointer, "out is null");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match serde_json::from_str::<Scenario>(text) {
            Ok(s) => emit_scenario(s, out),
            Err(e) => fail(EdnStatus::ParseError, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn edn_scenario_from_file(
    path: *const c_char,
    out: *mut *mut EdnScenario,
) -> EdnStatus {
    guard(|| {
        let p = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match std::fs::read_to_string(p) {
            Ok(text) => match CString::new(text) {
                Ok(c) => edn_scenario_from_json(c.as_ptr(), out),
                Err(_) => fail(EdnStatus::ParseError, "file contains NUL bytes"),
            },
            Err(e) => fail(EdnStatus::IoError, format!("{p}: {e}")),
        }
    })
}

/// Samples a scenario from a JSON scenario config.
#[no_mangle]
pub unsafe extern "C" fn edn_scenario_generate(
    config_json: *const c_char,
    out: *mut *mut EdnScenario,
) -> EdnStatus {
    guard(|| {
        if out.is_null() {
            return fail(EdnStatus::NullPointer, "out is null");
        }
        let text = match read_str(config_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg: ScenarioConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(EdnStatus::ParseError, e.to_string()),
        };
        match build_scenario(&cfg) {
            Ok(s) => emit_scenario(s, out),
            Err(e) => fail(net_status(&e), e.to_string()),
        }
    })
}

/// Writes the scenario as JSON into `buf` (NUL-terminated). `needed`
/// receives the required size including the terminator.
#[no_mangle]
pub unsafe extern "C" fn edn_scenario_to_json(
    scenario: *const EdnScenario,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> EdnStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(EdnStatus::NullPointer, "scenario is null");
        };
        let text = match serde_json::to_string(&s.0) {
            Ok(t) => t,
            Err(e) => return fail(EdnStatus::InvalidArgument, e.to_string()),
        };
        if !needed.is_null() {
            *needed = text.len() + 1;
        }
        if buf.is_null() || len < text.len() + 1 {
            return fail(EdnStatus::BufferTooSmall, "buffer too small");
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
        *buf.add(text.len()) = 0;
        EdnStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn edn_scenario_free(scenario: *mut EdnScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

#[no_mangle]
pub unsafe extern "C" fn edn_scenario_counts(
    scenario: *const EdnScenario,
    out: *mut EdnScenarioCounts,
) -> EdnStatus {
    let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
        return fail(EdnStatus::NullPointer, "null argument");
    };
    let s = &s.0;
    *out = EdnScenarioCounts {
        nodes: s.network().num_nodes(),
        edges: s.network().edges().len(),
        sources: s.network().sources().len(),
        learners: s.learners().len(),
        features: s.num_features(),
        types: s.num_types(),
        num_vars: s.index().len(),
    };
    EdnStatus::Ok
}

/// Runs a solver and returns the final allocation.
#[no_mangle]
pub unsafe extern "C" fn edn_solve(
    scenario: *const EdnScenario,
    params: *const EdnSolverParams,
    out: *mut *mut EdnRates,
) -> EdnStatus {
    guard(|| {
        let (Some(s), Some(p), false) = (scenario.as_ref(), params.as_ref(), out.is_null()) else {
            return fail(EdnStatus::NullPointer, "null argument");
        };
        let sp = SolverParams {
            delta: p.delta,
            estimator: EstimatorParams {
                samples: p.samples,
                truncation: Truncation::Multiplier(p.trunc_mult),
                utility_samples: p.utility_samples,
            },
            seed: p.seed,
            pga_iterations: p.pga_iterations,
            pga_step_scale: p.pga_step_scale,
            projection_iterations: p.projection_iterations,
            alpha: p.alpha,
            ..SolverParams::default()
        };
        match solve(p.algorithm.into(), &s.0, &sp) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(EdnRates(t.final_rates)));
                EdnStatus::Ok
            }
            Err(e @ SolveError::InvalidParams(_)) => fail(EdnStatus::InvalidArgument, e.to_string()),
            Err(e @ SolveError::Estimator(ednet::error::EstimatorError::InvalidParams(_))) => {
                fail(EdnStatus::InvalidArgument, e.to_string())
            }
            Err(e) => fail(EdnStatus::SolverError, e.to_string()),
        }
    })
}

/// Wraps caller-owned values as a rate vector for `scenario`.
#[no_mangle]
pub unsafe extern "C" fn edn_rates_from_values(
    scenario: *const EdnScenario,
    values: *const f64,
    len: usize,
    out: *mut *mut EdnRates,
) -> EdnStatus {
    guard(|| {
        let (Some(s), false, false) = (scenario.as_ref(), values.is_null(), out.is_null()) else {
            return fail(EdnStatus::NullPointer, "null argument");
        };
        let v = std::slice::from_raw_parts(values, len).to_vec();
        match RateVector::from_values(s.0.index(), v) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(EdnRates(r)));
                EdnStatus::Ok
            }
            Err(e) => fail(EdnStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn edn_rates_free(rates: *mut EdnRates) {
    if !rates.is_null() {
        drop(Box::from_raw(rates));
    }
}

/// Number of entries in the rate vector, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn edn_rates_len(rates: *const EdnRates) -> usize {
    rates.as_ref().map_or(0, |r| r.0.values.len())
}

/// Copies all rates (edge rates first, then learner rates) into `buf`.
#[no_mangle]
pub unsafe extern "C" fn edn_rates_copy(rates: *const EdnRates, buf: *mut f64, len: usize) -> EdnStatus {
    let (Some(r), false) = (rates.as_ref(), buf.is_null()) else {
        return fail(EdnStatus::NullPointer, "null argument");
    };
    let v = &r.0.values;
    if len < v.len() {
        return fail(EdnStatus::BufferTooSmall, format!("need {} entries", v.len()));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    EdnStatus::Ok
}

/// Copies the delivery rates of one learner (one entry per feature).
#[no_mangle]
pub unsafe extern "C" fn edn_rates_learner_copy(
    rates: *const EdnRates,
    learner: usize,
    buf: *mut f64,
    len: usize,
) -> EdnStatus {
    let (Some(r), false) = (rates.as_ref(), buf.is_null()) else {
        return fail(EdnStatus::NullPointer, "null argument");
    };
    if learner >= r.0.index.num_learners {
        return fail(EdnStatus::InvalidArgument, format!("no learner {learner}"));
    }
    let v = r.0.learner_rates(learner);
    if len < v.len() {
        return fail(EdnStatus::BufferTooSmall, format!("need {} entries", v.len()));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    EdnStatus::Ok
}

/// Monte Carlo utility estimate with its standard error.
#[no_mangle]
pub unsafe extern "C" fn edn_estimate_utility(
    scenario: *const EdnScenario,
    rates: *const EdnRates,
    samples: usize,
    seed: u64,
    mean: *mut f64,
    std_error: *mut f64,
) -> EdnStatus {
    guard(|| {
        let (Some(s), Some(r), false) = (scenario.as_ref(), rates.as_ref(), mean.is_null()) else {
            return fail(EdnStatus::NullPointer, "null argument");
        };
        match estimate_utility(&r.0, &s.0, samples, seed) {
            Ok(u) => {
                *mean = u.mean;
                if !std_error.is_null() {
                    *std_error = u.std_error;
                }
                EdnStatus::Ok
            }
            Err(e) => fail(EdnStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Counts constraint violations larger than `tol`.
#[no_mangle]
pub unsafe extern "C" fn edn_feasibility_violations(
    scenario: *const EdnScenario,
    rates: *const EdnRates,
    tol: f64,
    count: *mut usize,
) -> EdnStatus {
    guard(|| {
        let (Some(s), Some(r), false) = (scenario.as_ref(), rates.as_ref(), count.is_null()) else {
            return fail(EdnStatus::NullPointer, "null argument");
        };
        match feasibility_check(&r.0, &s.0, tol) {
            Ok(v) => {
                *count = v.len();
                EdnStatus::Ok
            }
            Err(e) => fail(EdnStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn edn_theory_constants(
    scenario: *const EdnScenario,
    out: *mut EdnTheoryConstants,
) -> EdnStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(EdnStatus::NullPointer, "null argument");
        };
        match compute_theory_constants(&s.0) {
            Ok(c) => {
                *out = EdnTheoryConstants {
                    lambda_max: c.lambda_max,
                    g_max: c.g_max,
                    lipschitz: c.lipschitz,
                };
                EdnStatus::Ok
            }
            Err(e) => fail(EdnStatus::SolverError, e.to_string()),
        }
    })
}
