//! C ABI for embedding the solver
//!
//! Callers hold opaque handles and check a status code on every call; the
//! detailed message of the most recent failure on the current thread is
//! available through [`chd_last_error`]. Every entry point catches panics,
//! so no Rust unwinding ever crosses the boundary.
//!
//! Handle lifecycle: a `chd_*_parse`/`chd_simulate` success transfers
//! ownership to the caller, who must pass the handle to the matching
//! `chd_*_free` exactly once. Handles are not thread-safe; share them only
//! with external synchronization.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use chd_core::config::{parse_config, parse_config_str, RunConfig};
use chd_core::modes::{forward_trajectory, run_mode, Mode};
use chd_core::state::Trajectory;
use chd_core::ChdError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChdStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument failed a structural check (bad mode name, wrong length).
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    Utf8 = 3,
    /// The run description was rejected (parse, validation, file access).
    Config = 4,
    /// The solver or one of its checks failed at runtime.
    Solver = 5,
    /// A panic was caught at the boundary; the handle state is unspecified.
    Panic = 6,
}

/// Opaque parsed run configuration.
#[repr(C)]
pub struct ChdConfig {
    _opaque: [u8; 0],
}

/// Opaque forward simulation result.
#[repr(C)]
pub struct ChdSimulation {
    _opaque: [u8; 0],
}

struct SimulationInner {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &ChdError) -> ChdStatus {
    if err.is_config_error() {
        ChdStatus::Config
    } else {
        ChdStatus::Solver
    }
}

fn fail(err: &ChdError) -> ChdStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn guard(body: impl FnOnce() -> ChdStatus) -> ChdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            set_error(&format!("internal panic: {msg}"));
            ChdStatus::Panic
        }
    }
}

/// Reads a UTF-8 C string argument.
///
/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn utf8_arg<'a>(ptr: *const c_char) -> Result<&'a str, ChdStatus> {
    if ptr.is_null() {
        set_error("required string argument is null");
        return Err(ChdStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        ChdStatus::Utf8
    })
}

unsafe fn config_ref<'a>(ptr: *const ChdConfig) -> Result<&'a RunConfig, ChdStatus> {
    if ptr.is_null() {
        set_error("config handle is null");
        return Err(ChdStatus::NullArgument);
    }
    Ok(unsafe { &*(ptr as *const RunConfig) })
}

unsafe fn sim_ref<'a>(ptr: *const ChdSimulation) -> Result<&'a SimulationInner, ChdStatus> {
    if ptr.is_null() {
        set_error("simulation handle is null");
        return Err(ChdStatus::NullArgument);
    }
    Ok(unsafe { &*(ptr as *const SimulationInner) })
}

fn out_param<T>(ptr: *mut T) -> Result<(), ChdStatus> {
    if ptr.is_null() {
        set_error("output pointer is null");
        return Err(ChdStatus::NullArgument);
    }
    Ok(())
}

/// Version of the library, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the most recent error message of this thread into `buf`
/// (NUL-terminated, truncated to `cap`). Returns the full length in bytes
/// including the NUL, so callers can retry with a larger buffer. A null or
/// zero-capacity buffer only queries the length.
#[no_mangle]
pub extern "C" fn chd_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

fn install_config(cfg: RunConfig, out: *mut *mut ChdConfig) -> ChdStatus {
    let handle = Box::into_raw(Box::new(cfg)) as *mut ChdConfig;
    unsafe { *out = handle };
    ChdStatus::Ok
}

/// Parses and validates a config file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chd_config_parse(
    path: *const c_char,
    out: *mut *mut ChdConfig,
) -> ChdStatus {
    guard(|| {
        if out_param(out).is_err() {
            return ChdStatus::NullArgument;
        }
        let path = match unsafe { utf8_arg(path) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match parse_config(Path::new(path)) {
            Ok(cfg) => install_config(cfg, out),
            Err(e) => fail(&e),
        }
    })
}

/// Parses config text directly; relative file references resolve against
/// `base_dir` (pass "." when unused).
///
/// # Safety
/// `text` and `base_dir` must be valid NUL-terminated strings, `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chd_config_parse_text(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut ChdConfig,
) -> ChdStatus {
    guard(|| {
        if out_param(out).is_err() {
            return ChdStatus::NullArgument;
        }
        let (text, base_dir) = match (unsafe { utf8_arg(text) }, unsafe { utf8_arg(base_dir) }) {
            (Ok(t), Ok(b)) => (t, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match parse_config_str(text, Path::new(base_dir)) {
            Ok(cfg) => install_config(cfg, out),
            Err(e) => fail(&e),
        }
    })
}

/// Overrides the seed recorded in the config.
///
/// # Safety
/// `cfg` must be a live handle from a `chd_config_parse*` call.
#[no_mangle]
pub unsafe extern "C" fn chd_config_set_seed(cfg: *mut ChdConfig, seed: u64) -> ChdStatus {
    guard(|| {
        if cfg.is_null() {
            set_error("config handle is null");
            return ChdStatus::NullArgument;
        }
        unsafe { &mut *(cfg as *mut RunConfig) }.seed = seed;
        ChdStatus::Ok
    })
}

/// Releases a config handle. Null is a no-op.
///
/// # Safety
/// `cfg` must be a handle from a `chd_config_parse*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn chd_config_free(cfg: *mut ChdConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg as *mut RunConfig) });
    }
}

/// Runs one batch mode ("simulate", "optimize", "grad-check",
/// "hessian-check", "energy-audit"), writing artifacts under `out_dir`.
/// `verified` (optional) receives the mode's own pass/fail verdict.
///
/// # Safety
/// `cfg` must be a live config handle; `mode` and `out_dir` valid strings;
/// `verified` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chd_run_mode(
    cfg: *const ChdConfig,
    mode: *const c_char,
    out_dir: *const c_char,
    verified: *mut bool,
) -> ChdStatus {
    guard(|| {
        let cfg = match unsafe { config_ref(cfg) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let (mode, out_dir) = match (unsafe { utf8_arg(mode) }, unsafe { utf8_arg(out_dir) }) {
            (Ok(m), Ok(o)) => (m, o),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mode: Mode = match mode.parse() {
            Ok(m) => m,
            Err(_) => {
                set_error(&format!("unknown mode `{mode}`"));
                return ChdStatus::InvalidArgument;
            }
        };
        match run_mode(cfg, mode, Path::new(out_dir)) {
            Ok(report) => {
                if !verified.is_null() {
                    unsafe { *verified = report.verified };
                }
                ChdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the forward solver described by the config and hands back the full
/// trajectory.
///
/// # Safety
/// `cfg` must be a live config handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn chd_simulate(
    cfg: *const ChdConfig,
    out: *mut *mut ChdSimulation,
) -> ChdStatus {
    guard(|| {
        if out_param(out).is_err() {
            return ChdStatus::NullArgument;
        }
        let cfg = match unsafe { config_ref(cfg) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let traj = match forward_trajectory(cfg) {
            Ok(t) => t,
            Err(e) => return fail(&e),
        };
        let handle = Box::into_raw(Box::new(SimulationInner { traj })) as *mut ChdSimulation;
        unsafe { *out = handle };
        ChdStatus::Ok
    })
}

/// Number of stored time levels (steps + 1), 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_levels(sim: *const ChdSimulation) -> usize {
    match unsafe { sim_ref(sim) } {
        Ok(inner) => inner.traj.snapshots.len(),
        Err(_) => 0,
    }
}

/// Grid dimensions of a simulation.
///
/// # Safety
/// `sim` must be a live simulation handle; `nx`, `ny` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_grid(
    sim: *const ChdSimulation,
    nx: *mut usize,
    ny: *mut usize,
) -> ChdStatus {
    guard(|| {
        let inner = match unsafe { sim_ref(sim) } {
            Ok(i) => i,
            Err(s) => return s,
        };
        if out_param(nx).is_err() || out_param(ny).is_err() {
            return ChdStatus::NullArgument;
        }
        let grid = inner.traj.snapshots[0].phi.grid;
        unsafe {
            *nx = grid.nx;
            *ny = grid.ny;
        }
        ChdStatus::Ok
    })
}

fn level_scalar(
    sim: *const ChdSimulation,
    level: usize,
    out: *mut f64,
    pick: impl Fn(&chd_core::state::StateSnapshot) -> f64,
) -> ChdStatus {
    guard(|| {
        let inner = match unsafe { sim_ref(sim) } {
            Ok(i) => i,
            Err(s) => return s,
        };
        if out_param(out).is_err() {
            return ChdStatus::NullArgument;
        }
        match inner.traj.snapshots.get(level) {
            Some(snap) => {
                unsafe { *out = pick(snap) };
                ChdStatus::Ok
            }
            None => {
                set_error(&format!(
                    "level {level} out of range, trajectory has {} levels",
                    inner.traj.snapshots.len()
                ));
                ChdStatus::InvalidArgument
            }
        }
    })
}

/// Physical time of a level.
///
/// # Safety
/// `sim` must be a live simulation handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_time(
    sim: *const ChdSimulation,
    level: usize,
    out: *mut f64,
) -> ChdStatus {
    level_scalar(sim, level, out, |s| s.t)
}

/// Ginzburg-Landau energy at a level.
///
/// # Safety
/// `sim` must be a live simulation handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_energy(
    sim: *const ChdSimulation,
    level: usize,
    out: *mut f64,
) -> ChdStatus {
    level_scalar(sim, level, out, |s| s.energy)
}

/// Spatial mean of the phase field at a level.
///
/// # Safety
/// `sim` must be a live simulation handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_mean(
    sim: *const ChdSimulation,
    level: usize,
    out: *mut f64,
) -> ChdStatus {
    level_scalar(sim, level, out, |s| s.phi_mean)
}

/// Copies the phase field of a level into `buf` (row-major, `len` must be
/// exactly nx*ny).
///
/// # Safety
/// `sim` must be a live simulation handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_phi(
    sim: *const ChdSimulation,
    level: usize,
    buf: *mut f64,
    len: usize,
) -> ChdStatus {
    guard(|| {
        let inner = match unsafe { sim_ref(sim) } {
            Ok(i) => i,
            Err(s) => return s,
        };
        if out_param(buf).is_err() {
            return ChdStatus::NullArgument;
        }
        let Some(snap) = inner.traj.snapshots.get(level) else {
            set_error(&format!(
                "level {level} out of range, trajectory has {} levels",
                inner.traj.snapshots.len()
            ));
            return ChdStatus::InvalidArgument;
        };
        let data = &snap.phi.data;
        if len != data.len() {
            set_error(&format!(
                "buffer length {len} does not match field size {}",
                data.len()
            ));
            return ChdStatus::InvalidArgument;
        }
        unsafe { std::ptr::copy_nonoverlapping(data.as_ptr(), buf, len) };
        ChdStatus::Ok
    })
}

/// Releases a simulation handle. Null is a no-op.
///
/// # Safety
/// `sim` must be a handle from `chd_simulate`, freed once.
#[no_mangle]
pub unsafe extern "C" fn chd_simulation_free(sim: *mut ChdSimulation) {
    if !sim.is_null() {
        drop(unsafe { Box::from_raw(sim as *mut SimulationInner) });
    }
}
