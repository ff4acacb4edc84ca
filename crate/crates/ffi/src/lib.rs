//! C interface to the simulator: configure a scenario, run it, read the
//! KPIs back. Handles are opaque; every call returns an [`FmsimStatus`] and
//! the message of the last failure on the calling thread is available from
//! [`fmsim_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use fmsim::bridge::{parse, WireMessage};
use fmsim::metrics::{rows, run_scenario, write_csv, ControllerKind, RunResult, Scenario, ScenarioConfig};
use fmsim::petri::Net;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmsimStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    SimulationError = 4,
    IoError = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// A scenario configuration.
pub struct FmsimConfig(ScenarioConfig);

/// The runs of one scenario.
pub struct FmsimResults(Vec<RunResult>);

/// KPIs of one run. `lead_time_mean_ms` is NaN when no order completed.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FmsimKpis {
    pub seed: u64,
    pub orders_released: u32,
    pub orders_completed: u32,
    pub lead_time_mean_ms: f64,
    pub throughput_per_hour: f64,
    pub makespan_ms: u64,
    pub failures: u64,
    pub machining_attempts: u64,
    pub protocol_violations: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: FmsimStatus, msg: impl Into<String>) -> FmsimStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> FmsimStatus) -> FmsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == FmsimStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(FmsimStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FmsimStatus> {
    if p.is_null() {
        return Err(fail(FmsimStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FmsimStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! handle {
    ($p:expr) => {
        match $p.as_ref() {
            Some(h) => h,
            None => return fail(FmsimStatus::NullArgument, "handle is null"),
        }
    };
}

macro_rules! handle_mut {
    ($p:expr) => {
        match $p.as_mut() {
            Some(h) => h,
            None => return fail(FmsimStatus::NullArgument, "handle is null"),
        }
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn fmsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn fmsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration for `scenario` ("A" or "B") and `controller`
/// ("agents" or "conventional") with default settings.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_new(
    scenario: *const c_char,
    controller: *const c_char,
    out: *mut *mut FmsimConfig,
) -> FmsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(FmsimStatus::NullArgument, "out is null");
        }
        let s: Scenario = match tri!(str_arg(scenario, "scenario")).parse() {
            Ok(s) => s,
            Err(e) => return fail(FmsimStatus::InvalidArgument, e.to_string()),
        };
        let c: ControllerKind = match tri!(str_arg(controller, "controller")).parse() {
            Ok(c) => c,
            Err(e) => return fail(FmsimStatus::InvalidArgument, e.to_string()),
        };
        *out = Box::into_raw(Box::new(FmsimConfig(ScenarioConfig::new(s, c))));
        FmsimStatus::Ok
    })
}

/// Configuration read from settings-file text.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_from_text(text: *const c_char, out: *mut *mut FmsimConfig) -> FmsimStatus {
    guard(|| {
        if out.is_null() {
            return fail(FmsimStatus::NullArgument, "out is null");
        }
        match ScenarioConfig::from_config_text(tri!(str_arg(text, "text"))) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(FmsimConfig(c)));
                FmsimStatus::Ok
            }
            Err(e) => fail(FmsimStatus::ParseError, e.to_string()),
        }
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_free(config: *mut FmsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

fn checked(config: &mut FmsimConfig, change: impl FnOnce(&mut ScenarioConfig)) -> FmsimStatus {
    let mut next = config.0.clone();
    change(&mut next);
    match next.check() {
        Ok(()) => {
            config.0 = next;
            FmsimStatus::Ok
        }
        Err(e) => fail(FmsimStatus::InvalidArgument, e.to_string()),
    }
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_set_orders(config: *mut FmsimConfig, orders: u32) -> FmsimStatus {
    guard(|| checked(handle_mut!(config), |c| c.base.order_count = orders))
}

/// Runs with the first `runs` of `seeds`.
///
/// # Safety
/// `config` must be a live handle and `seeds` point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_set_seeds(
    config: *mut FmsimConfig,
    seeds: *const u64,
    len: usize,
    runs: usize,
) -> FmsimStatus {
    guard(|| {
        let cfg = handle_mut!(config);
        if seeds.is_null() && len > 0 {
            return fail(FmsimStatus::NullArgument, "seeds is null");
        }
        let list = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(seeds, len).to_vec() };
        checked(cfg, |c| {
            c.seeds = list;
            c.runs = runs;
        })
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fmsim_config_set_failures(
    config: *mut FmsimConfig,
    probability: f64,
    repair_ms: u64,
) -> FmsimStatus {
    guard(|| {
        let cfg = handle_mut!(config);
        checked(cfg, |c| {
            c.failure_probability = probability;
            c.repair_time = repair_ms;
        })
    })
}

/// Runs every seed of `config`.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fmsim_run(config: *const FmsimConfig, out: *mut *mut FmsimResults) -> FmsimStatus {
    guard(|| {
        let cfg = handle!(config);
        if out.is_null() {
            return fail(FmsimStatus::NullArgument, "out is null");
        }
        match run_scenario(&cfg.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(FmsimResults(r)));
                FmsimStatus::Ok
            }
            Err(e) => fail(FmsimStatus::SimulationError, e.to_string()),
        }
    })
}

/// # Safety
/// `results` must come from [`fmsim_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fmsim_results_free(results: *mut FmsimResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of runs; 0 for a null handle.
///
/// # Safety
/// `results` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fmsim_results_len(results: *const FmsimResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.len())
}

/// KPIs of run `index`.
///
/// # Safety
/// `results` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fmsim_results_kpis(
    results: *const FmsimResults,
    index: usize,
    out: *mut FmsimKpis,
) -> FmsimStatus {
    guard(|| {
        let res = handle!(results);
        if out.is_null() {
            return fail(FmsimStatus::NullArgument, "out is null");
        }
        let Some(r) = res.0.get(index) else {
            return fail(FmsimStatus::OutOfRange, format!("run {index} of {}", res.0.len()));
        };
        *out = FmsimKpis {
            seed: r.seed,
            orders_released: r.kpis.orders_released,
            orders_completed: r.kpis.orders_completed,
            lead_time_mean_ms: r.kpis.lead_time_mean.unwrap_or(f64::NAN),
            throughput_per_hour: r.kpis.throughput,
            makespan_ms: r.kpis.makespan,
            failures: r.stats.failures as u64,
            machining_attempts: r.stats.machining_attempts as u64,
            protocol_violations: r.violations.len() as u64,
        };
        FmsimStatus::Ok
    })
}

/// The results table as CSV; free it with [`fmsim_string_free`].
///
/// # Safety
/// `results` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fmsim_results_csv(results: *const FmsimResults, out: *mut *mut c_char) -> FmsimStatus {
    guard(|| {
        let res = handle!(results);
        if out.is_null() {
            return fail(FmsimStatus::NullArgument, "out is null");
        }
        let mut buf = Vec::new();
        if let Err(e) = write_csv(&rows(&res.0), &mut buf) {
            return fail(FmsimStatus::IoError, e.to_string());
        }
        match CString::new(buf) {
            Ok(s) => {
                *out = s.into_raw();
                FmsimStatus::Ok
            }
            Err(_) => fail(FmsimStatus::IoError, "CSV contains NUL"),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fmsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a NET or SETUP document of `len` bytes.
///
/// # Safety
/// `xml` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn fmsim_validate_model(xml: *const u8, len: usize) -> FmsimStatus {
    guard(|| {
        if xml.is_null() {
            return fail(FmsimStatus::NullArgument, "xml is null");
        }
        let bytes = std::slice::from_raw_parts(xml, len);
        let model = match parse(bytes) {
            Ok(WireMessage::Net(m)) | Ok(WireMessage::Setup { net: m, .. }) => m,
            Ok(_) => return fail(FmsimStatus::ParseError, "not a NET or SETUP document"),
            Err(e) => return fail(FmsimStatus::ParseError, e.to_string()),
        };
        match Net::new(model) {
            Ok(_) => FmsimStatus::Ok,
            Err(e) => fail(FmsimStatus::InvalidArgument, e.to_string()),
        }
    })
}
