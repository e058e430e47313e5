//! C ABI over `echo_testbed`.
//!
//! Handles are opaque heap objects owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`EtStatus`]; the message
//! for the most recent failure on the calling thread is available from
//! [`et_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use echo_testbed::crypto::{srtp_derive, CryptoError, SrtpContext};
use echo_testbed::netsim::{to_jsonl, trace_hash};
use echo_testbed::scenario::{self, RunReport, Scenario, ScenarioError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    UnknownScenario = 3,
    ScenarioParse = 4,
    ScenarioRun = 5,
    InvalidArgument = 6,
    Auth = 7,
    Replay = 8,
    BufferTooSmall = 9,
    Panic = 10,
    Crypto = 11,
}

/// A finished scenario run.
pub struct EtRun {
    report: RunReport,
    jsonl: CString,
    hash: CString,
}

/// One SRTP direction.
pub struct EtSrtp {
    ctx: SrtpContext,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EtStatus, msg: impl Into<String>) -> EtStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> EtStatus) -> EtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(EtStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, EtStatus> {
    if p.is_null() {
        return Err(fail(EtStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(EtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn bytes_arg<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], EtStatus> {
    if p.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(fail(EtStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn scenario_status(e: &ScenarioError) -> EtStatus {
    let status = match e {
        ScenarioError::Unknown(_) => EtStatus::UnknownScenario,
        ScenarioError::Run(_) => EtStatus::ScenarioRun,
        _ => EtStatus::ScenarioParse,
    };
    fail(status, e.to_string())
}

fn crypto_status(e: &CryptoError) -> EtStatus {
    let status = match e {
        CryptoError::Auth => EtStatus::Auth,
        CryptoError::Replay => EtStatus::Replay,
        CryptoError::InvalidArgument(_) | CryptoError::UnknownSsrc(_) => EtStatus::InvalidArgument,
        _ => EtStatus::Crypto,
    };
    fail(status, e.to_string())
}

/// Copies `data` into a caller buffer. `*out_len` receives the required size
/// even when the buffer is too small.
unsafe fn write_out(data: &[u8], out: *mut u8, cap: usize, out_len: *mut usize) -> EtStatus {
    if out_len.is_null() {
        return fail(EtStatus::NullArgument, "out_len is null");
    }
    *out_len = data.len();
    if data.len() > cap || (out.is_null() && !data.is_empty()) {
        return fail(
            EtStatus::BufferTooSmall,
            format!("need {} bytes", data.len()),
        );
    }
    if !data.is_empty() {
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    EtStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn et_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn et_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Number of built-in scenarios.
#[no_mangle]
pub extern "C" fn et_scenario_count() -> usize {
    scenario::list_scenarios().len()
}

/// Name of built-in scenario `index` as a static string, or null.
#[no_mangle]
pub extern "C" fn et_scenario_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        scenario::list_scenarios()
            .into_iter()
            .map(|n| CString::new(n).expect("no NUL in names"))
            .collect()
    });
    names.get(index).map_or(ptr::null(), |c| c.as_ptr())
}

fn finish_run(s: &Scenario, seed: u64, out: *mut *mut EtRun) -> EtStatus {
    let report = match scenario::run(s, seed) {
        Ok(r) => r,
        Err(e) => return scenario_status(&e),
    };
    let jsonl = CString::new(to_jsonl(&report.trace)).unwrap_or_default();
    let hash = CString::new(trace_hash(&report.trace)).unwrap_or_default();
    let run = Box::new(EtRun {
        report,
        jsonl,
        hash,
    });
    unsafe { *out = Box::into_raw(run) };
    EtStatus::Ok
}

/// Runs a built-in scenario. `use_default_seed` non-zero ignores `seed`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_run_builtin(
    name: *const c_char,
    seed: u64,
    use_default_seed: i32,
    out: *mut *mut EtRun,
) -> EtStatus {
    guard(|| {
        if out.is_null() {
            return fail(EtStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let name = match str_arg(name, "name") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let s = match Scenario::builtin(name) {
            Ok(s) => s,
            Err(e) => return scenario_status(&e),
        };
        let seed = if use_default_seed != 0 { s.seed } else { seed };
        finish_run(&s, seed, out)
    })
}

/// Runs a scenario given as JSON text with its own seed.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_run_json(json: *const c_char, out: *mut *mut EtRun) -> EtStatus {
    guard(|| {
        if out.is_null() {
            return fail(EtStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let s = match Scenario::parse(text) {
            Ok(s) => s,
            Err(e) => return scenario_status(&e),
        };
        finish_run(&s, s.seed, out)
    })
}

/// 1 if every assertion passed, 0 if not, -1 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn et_run_passed(run: *const EtRun) -> i32 {
    match run.as_ref() {
        Some(r) => i32::from(r.report.passed()),
        None => -1,
    }
}

/// Number of trace events.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn et_run_event_count(run: *const EtRun) -> usize {
    run.as_ref().map_or(0, |r| r.report.trace.len())
}

/// Number of assertion verdicts.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn et_run_verdict_count(run: *const EtRun) -> usize {
    run.as_ref().map_or(0, |r| r.report.verdicts.len())
}

/// Writes verdict `index` as "PASS name: detail" or "FAIL name: detail".
///
/// # Safety
/// `run` must be a live handle; `out` must hold `cap` bytes; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_run_verdict(
    run: *const EtRun,
    index: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> EtStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(EtStatus::NullArgument, "run is null");
        };
        let Some(v) = r.report.verdicts.get(index) else {
            return fail(EtStatus::InvalidArgument, format!("no verdict {index}"));
        };
        let line = format!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
        write_out(line.as_bytes(), out, cap, out_len)
    })
}

/// The trace as JSON lines, NUL-terminated, owned by the handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn et_run_trace_jsonl(run: *const EtRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.jsonl.as_ptr())
}

/// Hex SHA-256 of the JSON-lines trace, owned by the handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn et_run_trace_hash(run: *const EtRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.hash.as_ptr())
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn et_run_free(run: *mut EtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Derives an SRTP context from a 32-byte master key and 14-byte salt.
///
/// # Safety
/// `key` and `salt` must point to the given lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn et_srtp_new(
    key: *const u8,
    key_len: usize,
    salt: *const u8,
    salt_len: usize,
    ssrc: u32,
    out: *mut *mut EtSrtp,
) -> EtStatus {
    guard(|| {
        if out.is_null() {
            return fail(EtStatus::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let (key, salt) = match (
            bytes_arg(key, key_len, "key"),
            bytes_arg(salt, salt_len, "salt"),
        ) {
            (Ok(k), Ok(s)) => (k, s),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match srtp_derive(key, salt, ssrc) {
            Ok(ctx) => {
                *out = Box::into_raw(Box::new(EtSrtp { ctx }));
                EtStatus::Ok
            }
            Err(e) => crypto_status(&e),
        }
    })
}

/// Protects one payload. `out` needs `len + 22` bytes.
///
/// # Safety
/// `ctx` must be a live handle; buffers must match their lengths.
#[no_mangle]
pub unsafe extern "C" fn et_srtp_protect(
    ctx: *mut EtSrtp,
    payload: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> EtStatus {
    guard(|| {
        let Some(c) = ctx.as_mut() else {
            return fail(EtStatus::NullArgument, "ctx is null");
        };
        let payload = match bytes_arg(payload, len, "payload") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let needed = len + 22;
        if cap < needed || out.is_null() {
            if !out_len.is_null() {
                *out_len = needed;
            }
            return fail(EtStatus::BufferTooSmall, format!("need {needed} bytes"));
        }
        match c.ctx.protect(payload) {
            Ok(pkt) => write_out(&pkt, out, cap, out_len),
            Err(e) => crypto_status(&e),
        }
    })
}

/// Authenticates, replay-checks and decrypts one packet.
///
/// # Safety
/// `ctx` must be a live handle; buffers must match their lengths.
#[no_mangle]
pub unsafe extern "C" fn et_srtp_unprotect(
    ctx: *mut EtSrtp,
    packet: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> EtStatus {
    guard(|| {
        let Some(c) = ctx.as_mut() else {
            return fail(EtStatus::NullArgument, "ctx is null");
        };
        let packet = match bytes_arg(packet, len, "packet") {
            Ok(p) => p,
            Err(s) => return s,
        };
        if cap < len || out.is_null() {
            if !out_len.is_null() {
                *out_len = len;
            }
            return fail(EtStatus::BufferTooSmall, format!("need {len} bytes"));
        }
        match c.ctx.unprotect(packet) {
            Ok(pt) => write_out(&pt, out, cap, out_len),
            Err(e) => crypto_status(&e),
        }
    })
}

/// # Safety
/// `ctx` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn et_srtp_free(ctx: *mut EtSrtp) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_line_up_with_core() {
        assert_eq!(et_scenario_count(), 10);
        for i in 0..et_scenario_count() {
            let p = et_scenario_name(i);
            assert!(!p.is_null());
            let n = unsafe { CStr::from_ptr(p) }.to_str().unwrap();
            assert_eq!(n, scenario::list_scenarios()[i]);
        }
        assert!(et_scenario_name(10).is_null());
    }

    #[test]
    fn null_out_is_reported() {
        let s = unsafe { et_run_builtin(c"pair".as_ptr(), 0, 1, ptr::null_mut()) };
        assert_eq!(s, EtStatus::NullArgument);
        assert!(!et_last_error().is_null());
    }
}
