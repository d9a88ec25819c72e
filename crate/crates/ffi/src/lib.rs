//! C ABI over `dcf-core`.
//!
//! The surface follows the classic opaque-handle pattern:
//!
//! * [`dcf_config_new`] parses and validates a JSON configuration (the same
//!   schema the `dcf` binary reads) and returns an opaque `DcfConfig*`.
//! * `dcf_solve` / `dcf_optimize` / `dcf_simulate` run one operation against a
//!   handle and fill a plain C struct through an out-pointer.
//! * Every fallible call returns an `int` status: `0` on success, `2` for
//!   configuration or parameter errors, `3` when the equilibrium solver fails
//!   to converge, and `4` when an optimization target is infeasible — the same
//!   classes the CLI uses as process exit codes.
//! * On failure, [`dcf_last_error`] returns a thread-local, NUL-terminated
//!   message describing the most recent error on the calling thread.
//!
//! The matching declarations live in `include/dcf.h`, which is written by
//! hand; `tests/abi.rs` keeps the two in sync by grepping the header for every
//! exported symbol and compiling it with a C compiler when one is available.
//!
//! # Safety
//!
//! Pointers passed to these functions must be either NULL (where documented)
//! or valid for the stated direction; strings must be NUL-terminated UTF-8.
//! Handles must be freed exactly once via [`dcf_config_free`] and never used
//! afterwards. All functions are safe to call from multiple threads as long
//! as each `DcfConfig` handle is only used by one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dcf_core::config::{parse_raw, RawConfig, Resolved};
use dcf_core::optimizer::optimize;
use dcf_core::params::payload_bits_to_report_bytes;
use dcf_core::sim::Simulator;
use dcf_core::throughput::operating_point;
use dcf_core::{Error, Region};

/// Success.
pub const DCF_OK: c_int = 0;
/// Configuration or parameter error (also: misuse such as NULL out-pointers).
pub const DCF_ERR_INVALID: c_int = 2;
/// The equilibrium solver did not converge within its iteration budget.
pub const DCF_ERR_SOLVER: c_int = 3;
/// The optimization target cannot be met (PER target or window infeasible).
pub const DCF_ERR_INFEASIBLE: c_int = 4;

/// `region` values in the result structs.
pub const DCF_REGION_BLC: c_int = 0;
pub const DCF_REGION_LC: c_int = 1;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> c_int {
    err.exit_code() as c_int
}

fn fail(err: &Error) -> c_int {
    set_last_error(&err.to_string());
    status_of(err)
}

fn fail_invalid(msg: &str) -> c_int {
    set_last_error(msg);
    DCF_ERR_INVALID
}

/// Runs `body` with panic containment; a panic becomes `DCF_ERR_INVALID`.
fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail_invalid("internal error: panic inside the library"),
    }
}

/// Opaque configuration handle. Owns a parsed, validated raw configuration.
pub struct DcfConfig {
    raw: RawConfig,
}

impl DcfConfig {
    fn resolve(&self, seed: Option<u64>) -> Result<Resolved, Error> {
        let mut resolved = self.raw.resolve()?;
        if let Some(s) = seed {
            resolved.sim.seed = s;
        }
        Ok(resolved)
    }
}

/// Solved operating point; mirrors one row of the CLI's `solve.csv`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfOperatingPoint {
    /// Per-station transmission probability at equilibrium.
    pub tau: f64,
    /// Conditional collision probability.
    pub p_col: f64,
    /// Equivalent failure probability (collision or channel error).
    pub p_eq: f64,
    /// Probability of at least one arrival per slot.
    pub q: f64,
    /// Expected slot duration, seconds.
    pub e_slot_s: f64,
    /// Aggregate throughput, bits/second.
    pub s_bps: f64,
    /// Throughput-maximizing transmission probability.
    pub tau_m: f64,
    /// Link capacity, bits/second.
    pub s_m_bps: f64,
    /// Critical per-station arrival rate, packets/second.
    pub lambda_c_pps: f64,
    /// Fixed-point residual at the returned solution.
    pub residual: f64,
    /// Solver iterations consumed.
    pub iterations: u64,
    /// `DCF_REGION_BLC` or `DCF_REGION_LC`.
    pub region: c_int,
    /// Nonzero when the residual scan saw more than one sign change.
    pub multiple_roots: c_int,
}

/// Cross-layer tuning outcome; mirrors one row of the CLI's `optimize.csv`.
/// Payload sizes are reported in bytes; `-1` marks fields the chosen region
/// leaves unset (window tuning in BLC, payload tuning in LC).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfOptimization {
    /// Packet error rate at the selected payload size.
    pub achieved_pe: f64,
    /// Model-predicted throughput after tuning, bits/second.
    pub predicted_s_bps: f64,
    /// Critical load of the tuned configuration, packets/second.
    pub lambda_c_pps: f64,
    /// Optimal minimum contention window, or -1.
    pub w_op: i64,
    /// Payload after the load-matching step, bytes, or -1.
    pub payload_step1_b: i64,
    /// Payload after the error-bound step, bytes, or -1.
    pub payload_step2_b: i64,
    /// Final selected payload, bytes, or -1.
    pub payload_opt_b: i64,
    /// `DCF_REGION_BLC` or `DCF_REGION_LC`.
    pub region: c_int,
    /// Nonzero when tuning moved the cell across the region boundary.
    pub region_shift_warning: c_int,
}

/// Aggregate simulation metrics; mirrors the CLI's `metrics.csv` row.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfSimMetrics {
    /// Simulated time, seconds.
    pub sim_time_s: f64,
    /// Time inside the measurement window (after warmup), seconds.
    pub measured_time_s: f64,
    /// Aggregate throughput over the measurement window, bits/second.
    pub s_bps: f64,
    /// Attempt-rate estimate of the per-station transmission probability.
    pub measured_tau: f64,
    /// Collision-share estimate of the conditional collision probability.
    pub measured_p_col: f64,
    /// Total slots simulated.
    pub slots: u64,
    /// Slots inside the measurement window.
    pub slots_measured: u64,
    /// Idle slots in the measurement window.
    pub idle_slots: u64,
    /// Successful-transmission slots in the measurement window.
    pub success_slots: u64,
    /// Collision slots in the measurement window.
    pub collision_slots: u64,
    /// Channel-error slots in the measurement window.
    pub error_slots: u64,
    /// Payload bits delivered inside the measurement window.
    pub delivered_payload_bits: u64,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on the calling thread ("" if none).
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dcf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses and validates a JSON configuration.
///
/// `json_utf8` may be NULL for an all-defaults configuration. On success,
/// writes a handle to `out` and returns `DCF_OK`; the handle must be released
/// with [`dcf_config_free`].
///
/// # Safety
/// `json_utf8` must be NULL or a valid NUL-terminated string; `out` must be a
/// valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dcf_config_new(
    json_utf8: *const c_char,
    out: *mut *mut DcfConfig,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail_invalid("dcf_config_new: out pointer is NULL");
        }
        let text = if json_utf8.is_null() {
            "{}"
        } else {
            match unsafe { CStr::from_ptr(json_utf8) }.to_str() {
                Ok(t) => t,
                Err(_) => return fail_invalid("dcf_config_new: json is not valid UTF-8"),
            }
        };
        let raw = match parse_raw(text) {
            Ok(raw) => raw,
            Err(e) => return fail(&e),
        };
        // Validate eagerly so configuration mistakes surface here, not on the
        // first computation.
        if let Err(e) = raw.resolve() {
            return fail(&e);
        }
        unsafe { out.write(Box::into_raw(Box::new(DcfConfig { raw }))) };
        DCF_OK
    })
}

/// Releases a handle created by [`dcf_config_new`]. NULL is a no-op.
///
/// # Safety
/// `cfg` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dcf_config_free(cfg: *mut DcfConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

fn region_code(region: Region) -> c_int {
    match region {
        Region::Blc => DCF_REGION_BLC,
        Region::Lc => DCF_REGION_LC,
    }
}

fn opt_bytes(bits: Option<u64>) -> i64 {
    bits.map(payload_bits_to_report_bytes).map_or(-1, |b| b as i64)
}

/// Solves the configured scenario for its equilibrium operating point.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dcf_solve(cfg: *const DcfConfig, out: *mut DcfOperatingPoint) -> c_int {
    guarded(|| {
        let (cfg, out) = match (unsafe { cfg.as_ref() }, out.is_null()) {
            (Some(c), false) => (c, out),
            _ => return fail_invalid("dcf_solve: NULL argument"),
        };
        let resolved = match cfg.resolve(None) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let op = match operating_point(
            &resolved.scenario,
            &resolved.timing,
            &resolved.solver,
            resolved.sim.saturated,
        ) {
            Ok(op) => op,
            Err(e) => return fail(&e),
        };
        let s = &op.solution;
        unsafe {
            out.write(DcfOperatingPoint {
                tau: s.tau,
                p_col: s.p_col,
                p_eq: s.p_eq,
                q: s.q,
                e_slot_s: s.expected_slot_s,
                s_bps: op.throughput_bps,
                tau_m: op.tau_m,
                s_m_bps: op.s_m_bps,
                lambda_c_pps: op.lambda_c_pps,
                residual: s.residual,
                iterations: s.iterations,
                region: region_code(op.region),
                multiple_roots: s.multiple_roots as c_int,
            });
        }
        DCF_OK
    })
}

/// Runs the cross-layer tuning step for the configured scenario.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dcf_optimize(cfg: *const DcfConfig, out: *mut DcfOptimization) -> c_int {
    guarded(|| {
        let (cfg, out) = match (unsafe { cfg.as_ref() }, out.is_null()) {
            (Some(c), false) => (c, out),
            _ => return fail_invalid("dcf_optimize: NULL argument"),
        };
        let resolved = match cfg.resolve(None) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let outcome = match optimize(&resolved.scenario, &resolved.timing) {
            Ok(o) => o,
            Err(e) => return fail(&e),
        };
        unsafe {
            out.write(DcfOptimization {
                achieved_pe: outcome.achieved_pe,
                predicted_s_bps: outcome.predicted_throughput_bps,
                lambda_c_pps: outcome.lambda_c_pps,
                w_op: outcome.w_op.map_or(-1, i64::from),
                payload_step1_b: opt_bytes(outcome.payload_step1_bits),
                payload_step2_b: opt_bytes(outcome.payload_step2_bits),
                payload_opt_b: opt_bytes(outcome.payload_opt_bits),
                region: region_code(outcome.region),
                region_shift_warning: outcome.region_shift_warning as c_int,
            });
        }
        DCF_OK
    })
}

/// Runs the slot-level simulator for the configured scenario.
///
/// `seed` may be NULL to use the configured seed, or point at a replacement
/// master seed. Identical configurations and seeds produce identical metrics.
///
/// # Safety
/// `cfg` must be a live handle; `seed` must be NULL or valid for reads; `out`
/// must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dcf_simulate(
    cfg: *const DcfConfig,
    seed: *const u64,
    out: *mut DcfSimMetrics,
) -> c_int {
    guarded(|| {
        let (cfg, out) = match (unsafe { cfg.as_ref() }, out.is_null()) {
            (Some(c), false) => (c, out),
            _ => return fail_invalid("dcf_simulate: NULL argument"),
        };
        let seed = unsafe { seed.as_ref() }.copied();
        let resolved = match cfg.resolve(seed) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        let m = match Simulator::run(resolved.sim) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        unsafe {
            out.write(DcfSimMetrics {
                sim_time_s: m.sim_time_s,
                measured_time_s: m.measured_time_s,
                s_bps: m.aggregate_throughput_bps,
                measured_tau: m.measured_tau,
                measured_p_col: m.measured_p_col,
                slots: m.tally.total(),
                slots_measured: m.tally_measured.total(),
                idle_slots: m.tally_measured.idle,
                success_slots: m.tally_measured.success,
                collision_slots: m.tally_measured.collision,
                error_slots: m.tally_measured.error,
                delivered_payload_bits: m.delivered_payload_bits,
            });
        }
        DCF_OK
    })
}
