//! C interface to the clearing library.
//!
//! A study is loaded from the same TOML and case files as the command line
//! tool, cleared with one mechanism, and its results are copied out into
//! caller buffers. Every fallible call returns a [`GctsStatus`]; the message
//! of the last failure on the calling thread is kept for
//! [`gcts_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gcts::caseio::{parse_bids, stitch, ScenarioConfig, StitchConfig};
use gcts::error::Error;
use gcts::experiments::Study;
use gcts::market::{ClearingSolution, Market, Mechanism};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GctsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Structure = 6,
    Infeasible = 7,
    Numerical = 8,
    Audit = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GctsMechanism {
    Jed = 0,
    Cts = 1,
    Gcts = 2,
}

impl From<GctsMechanism> for Mechanism {
    fn from(m: GctsMechanism) -> Self {
        match m {
            GctsMechanism::Jed => Mechanism::Jed,
            GctsMechanism::Cts => Mechanism::Cts,
            GctsMechanism::Gcts => Mechanism::Gcts,
        }
    }
}

/// Cost components of a solution, $/h.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GctsCosts {
    pub generation: f64,
    pub interface: f64,
    pub total: f64,
}

/// A loaded network with its bids and scenario settings.
pub struct GctsStudy {
    study: Study,
    market: Market,
}

/// The outcome of one clearing.
pub struct GctsSolution {
    sol: ClearingSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GctsStatus {
    match e {
        Error::Io { .. } => GctsStatus::Io,
        Error::Parse { .. } => GctsStatus::Parse,
        Error::Config(_) => GctsStatus::Config,
        Error::Structure(_) => GctsStatus::Structure,
        Error::Singular { .. } | Error::Numerical(_) => GctsStatus::Numerical,
        Error::Infeasible(_) => GctsStatus::Infeasible,
        Error::Audit(_) => GctsStatus::Audit,
    }
}

struct Failure(GctsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GctsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GctsStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {message}"));
            GctsStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<Option<PathBuf>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GctsStatus::InvalidArgument, format!("{name} is not valid UTF-8")))?;
    Ok(Some(PathBuf::from(s)))
}

fn null(name: &str) -> Failure {
    Failure(GctsStatus::NullArgument, format!("{name} is null"))
}

/// Loads a study. `bids_path` and `scenario_path` may be null; without a bid
/// book every tie-line gets one bid in each direction.
///
/// # Safety
/// Paths must be null or nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_load(
    stitch_path: *const c_char,
    bids_path: *const c_char,
    scenario_path: *const c_char,
    out: *mut *mut GctsStudy,
) -> GctsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let stitch_path = path_arg(stitch_path, "stitch_path")?.ok_or_else(|| null("stitch_path"))?;
        let cfg = StitchConfig::load(&stitch_path)?;
        let (net, part) = stitch(&cfg)?;
        let bids = match path_arg(bids_path, "bids_path")? {
            Some(p) => Some(parse_bids(p, &net, &part)?),
            None => None,
        };
        let scenario = match path_arg(scenario_path, "scenario_path")? {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        let study = Study::new(net, part, bids, scenario)?;
        let market = study.market()?;
        *out = Box::into_raw(Box::new(GctsStudy { study, market }));
        Ok(())
    })
}

/// # Safety
/// `study` must be null or come from [`gcts_study_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_free(study: *mut GctsStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

/// Number of buses, zero for a null study.
///
/// # Safety
/// `study` must be null or a live study.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_num_buses(study: *const GctsStudy) -> usize {
    study.as_ref().map_or(0, |s| s.market.net.num_buses())
}

/// # Safety
/// `study` must be null or a live study.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_num_branches(study: *const GctsStudy) -> usize {
    study.as_ref().map_or(0, |s| s.market.net.branches().len())
}

/// # Safety
/// `study` must be null or a live study.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_num_areas(study: *const GctsStudy) -> usize {
    study.as_ref().map_or(0, |s| s.market.part.num_areas())
}

/// # Safety
/// `study` must be null or a live study.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_num_bids(study: *const GctsStudy) -> usize {
    study.as_ref().map_or(0, |s| s.study.bids.bids.len())
}

/// Clears the study with one mechanism. `loads` holds one MW value per bus
/// in bus order; pass null to use the forecast loads.
///
/// # Safety
/// `study` must be a live study, `loads` null or `num_loads` readable
/// values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcts_study_solve(
    study: *const GctsStudy,
    mechanism: GctsMechanism,
    loads: *const f64,
    num_loads: usize,
    out: *mut *mut GctsSolution,
) -> GctsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        let m = &s.market;
        let loads = if loads.is_null() {
            m.forecast()
        } else {
            std::slice::from_raw_parts(loads, num_loads).to_vec()
        };
        let book = s.study.book();
        let sol = match Mechanism::from(mechanism) {
            Mechanism::Jed => m.solve_jed(&loads)?,
            Mechanism::Gcts => m.solve_gcts(&book, &loads)?,
            Mechanism::Cts => m.solve_cts(&book, &s.study.proxies(m)?, &loads)?,
        };
        *out = Box::into_raw(Box::new(GctsSolution { sol }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or come from [`gcts_study_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_free(solution: *mut GctsSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live solution and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_costs(solution: *const GctsSolution, out: *mut GctsCosts) -> GctsStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = GctsCosts {
            generation: s.sol.internal_cost,
            interface: s.sol.interface_cost,
            total: s.sol.total_cost(),
        };
        Ok(())
    })
}

unsafe fn copy_out(
    solution: *const GctsSolution,
    pick: impl FnOnce(&ClearingSolution) -> &[f64],
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null("solution"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let values = pick(&s.sol);
        *written = values.len();
        if buf.is_null() || capacity < values.len() {
            return Err(Failure(
                GctsStatus::BufferTooSmall,
                format!("{} values do not fit in a buffer of {capacity}", values.len()),
            ));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// Copies the nodal prices ($/MWh, bus order) into `buf`. `written`
/// receives the number of values; when the buffer is null or short it
/// receives the required length and the status is `BUFFER_TOO_SMALL`.
///
/// # Safety
/// `solution` must be live, `buf` null or `capacity` writable values,
/// `written` writable.
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_prices(
    solution: *const GctsSolution,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    copy_out(solution, |s| &s.lmp, buf, capacity, written)
}

/// Branch flows in MW, branch order. Buffer rules as for prices.
///
/// # Safety
/// As for [`gcts_solution_prices`].
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_flows(
    solution: *const GctsSolution,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    copy_out(solution, |s| &s.flows_mw, buf, capacity, written)
}

/// Generator dispatch in MW, generator order.
///
/// # Safety
/// As for [`gcts_solution_prices`].
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_dispatch(
    solution: *const GctsSolution,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    copy_out(solution, |s| &s.dispatch_mw, buf, capacity, written)
}

/// Cleared bid quantities in MW, bid order; empty for joint dispatch.
///
/// # Safety
/// As for [`gcts_solution_prices`].
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_cleared(
    solution: *const GctsSolution,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    copy_out(solution, |s| &s.cleared_mw, buf, capacity, written)
}

/// Net export of each area in MW, area order.
///
/// # Safety
/// As for [`gcts_solution_prices`].
#[no_mangle]
pub unsafe extern "C" fn gcts_solution_net_export(
    solution: *const GctsSolution,
    buf: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> GctsStatus {
    copy_out(solution, |s| &s.net_export_mw, buf, capacity, written)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gcts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn gcts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
