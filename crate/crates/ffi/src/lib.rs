//! C ABI for modglue.
//!
//! Instances live behind the opaque `MgInstance` handle and are exchanged as
//! JSON in the same formats as the CLI. Every fallible function returns an
//! `MgStatus`; on failure the message is kept per thread and can be fetched
//! with [`mg_last_error_message`]. Strings returned by the library are
//! released with [`mg_string_free`], handles with [`mg_instance_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use modglue::gen::{self, GenConfig, TwistMode};
use modglue::glue;
use modglue::morita;
use modglue::toolkit::{self, Instance};
use modglue::Error;

/// Opaque instance handle.
pub struct MgInstance {
    inner: Instance,
}

/// Status codes. The first four match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    InvalidInput = 1,
    CheckFailed = 2,
    ParseError = 3,
    NullPointer = 4,
    WrongKind = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgKind {
    Module = 0,
    Gluing = 1,
    Bimodule = 2,
    BimoduleDatum = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MgTwist {
    Coherent = 0,
    RandomUnitary = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MgStatus {
    match toolkit::error_code(e) {
        1 => MgStatus::InvalidInput,
        3 => MgStatus::ParseError,
        _ => MgStatus::CheckFailed,
    }
}

type FfiResult = Result<(), (MgStatus, String)>;

fn lib_err(e: Error) -> (MgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MgStatus, String) {
    (MgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any error or panic, and returns the status.
fn guard(f: impl FnOnce() -> FfiResult) -> MgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            MgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (MgStatus::ParseError, format!("{what} is not UTF-8: {e}")))
}

unsafe fn instance<'a>(p: *const MgInstance) -> Result<&'a Instance, (MgStatus, String)> {
    p.as_ref().map(|h| &h.inner).ok_or_else(|| null("instance"))
}

unsafe fn put_instance(out: *mut *mut MgInstance, inner: Instance) -> FfiResult {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(MgInstance { inner }));
    Ok(())
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

fn wrong_kind(expected: &str, got: &Instance) -> (MgStatus, String) {
    (MgStatus::WrongKind, format!("expected a {expected}, got a {}", got.kind()))
}

/// Version string of the library; static, do not free.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Free with
/// [`mg_string_free`].
#[no_mangle]
pub extern "C" fn mg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `inst` must be NULL or a handle returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_free(inst: *mut MgInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Parses a JSON instance.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_parse(json: *const c_char, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let inst = Instance::parse(text).map_err(lib_err)?;
        put_instance(out, inst)
    })
}

/// Reads a JSON instance from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_load(path: *const c_char, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let p = read_str(path, "path")?;
        let (inst, _) = Instance::load(Path::new(p)).map_err(lib_err)?;
        put_instance(out, inst)
    })
}

/// Generates an instance with the default bounds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_generate(kind: MgKind, seed: u64, twist: MgTwist, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let cfg = GenConfig {
            twist_mode: match twist {
                MgTwist::Coherent => TwistMode::Coherent,
                MgTwist::RandomUnitary => TwistMode::RandomUnitary,
            },
            ..GenConfig::with_seed(seed)
        };
        let inst = match kind {
            MgKind::Module => gen::random_module_instance(&cfg).map(Instance::Module),
            MgKind::Gluing => gen::random_gluing_datum(&cfg).map(Instance::Gluing),
            MgKind::Bimodule => gen::random_bimodule(&cfg).map(Instance::Bimodule),
            MgKind::BimoduleDatum => gen::random_bimodule_datum(&cfg).map(Instance::BimoduleDatum),
        }
        .map_err(lib_err)?;
        put_instance(out, inst)
    })
}

/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_kind(inst: *const MgInstance, out: *mut MgKind) -> MgStatus {
    guard(|| {
        let k = match instance(inst)? {
            Instance::Module(_) => MgKind::Module,
            Instance::Gluing(_) => MgKind::Gluing,
            Instance::Bimodule(_) => MgKind::Bimodule,
            Instance::BimoduleDatum(_) => MgKind::BimoduleDatum,
        };
        put(out, k, "out")
    })
}

/// Serializes to JSON; free the result with [`mg_string_free`].
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_instance_to_json(inst: *const MgInstance, out: *mut *mut c_char) -> MgStatus {
    guard(|| {
        let s = instance(inst)?.to_json();
        let c = CString::new(s).map_err(|e| (MgStatus::CheckFailed, e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

/// Runs the validators. `passed` is set when every required check passes;
/// `max_residual` is the largest residual among them (infinite if a check
/// produced none).
///
/// # Safety
/// `inst` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_validate(inst: *const MgInstance, tol: f64, passed: *mut bool, max_residual: *mut f64) -> MgStatus {
    guard(|| {
        let reports = toolkit::validate_reports(instance(inst)?, tol, "ffi").map_err(lib_err)?;
        let required: Vec<_> = reports.iter().filter(|r| !r.advisory).collect();
        let worst = required
            .iter()
            .map(|r| r.max_residual.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        put(passed, required.iter().all(|r| r.pass), "passed")?;
        put(max_residual, worst, "max_residual")
    })
}

/// Pulls a module instance apart into a gluing datum.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_pull_apart(inst: *const MgInstance, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let Instance::Module(m) = instance(inst)? else {
            return Err(wrong_kind("module instance", instance(inst)?));
        };
        let d = glue::pull_apart(&m.module, &m.cover).map_err(lib_err)?;
        put_instance(out, Instance::Gluing(d))
    })
}

/// Glues a gluing datum into a module instance over the same cover.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_glue(inst: *const MgInstance, tol: f64, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let Instance::Gluing(d) = instance(inst)? else {
            return Err(wrong_kind("gluing datum", instance(inst)?));
        };
        let g = glue::glue(d, tol).map_err(lib_err)?;
        put_instance(
            out,
            Instance::Module(gen::ModuleInstance {
                algebra: d.base().clone(),
                cover: d.cover().clone(),
                module: g.module().clone(),
            }),
        )
    })
}

/// Largest residual of the descent identities on a gluing datum; dimension
/// mismatches count as infinite. `samples` random vectors are drawn from
/// `seed`.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_descent_check(inst: *const MgInstance, tol: f64, seed: u64, samples: usize, out: *mut f64) -> MgStatus {
    guard(|| {
        let Instance::Gluing(d) = instance(inst)? else {
            return Err(wrong_kind("gluing datum", instance(inst)?));
        };
        let r = glue::descent_identities_check(d, tol, seed, samples).map_err(lib_err)?;
        let dims_ok = r.glue_dim == r.kernel_dim && r.glued_tensor_dim == r.tensor_kernel_dim;
        let worst = if dims_ok {
            [
                r.epsilon_delta,
                r.coassociativity,
                r.delta_isometry,
                r.kernel_distance,
                r.tensor_kernel_distance,
                r.exactness_isometry,
            ]
            .into_iter()
            .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        put(out, worst, "out")
    })
}

/// `max |f − 1|` over the obstruction scalars of a bimodule datum.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_obstruction_deviation(inst: *const MgInstance, tol: f64, out: *mut f64) -> MgStatus {
    guard(|| {
        let Instance::BimoduleDatum(d) = instance(inst)? else {
            return Err(wrong_kind("bimodule datum", instance(inst)?));
        };
        let f = morita::obstruction_2cocycle(d, tol).map_err(lib_err)?;
        put(out, f.max_deviation(), "out")
    })
}

/// Glues a bimodule datum into an equivalence bimodule.
///
/// # Safety
/// `inst` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_morita_glue(inst: *const MgInstance, tol: f64, out: *mut *mut MgInstance) -> MgStatus {
    guard(|| {
        let Instance::BimoduleDatum(d) = instance(inst)? else {
            return Err(wrong_kind("bimodule datum", instance(inst)?));
        };
        let g = morita::glue_bimodules(d, tol).map_err(lib_err)?;
        put_instance(out, Instance::Bimodule(g.bimodule))
    })
}

/// Conjugates the bimodule datum `m` over `(A′, A′)` by `d` over `(A′, A)`.
///
/// # Safety
/// `d` and `m` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mg_picard_conjugate(
    d: *const MgInstance,
    m: *const MgInstance,
    tol: f64,
    out: *mut *mut MgInstance,
) -> MgStatus {
    guard(|| {
        let Instance::BimoduleDatum(dd) = instance(d)? else {
            return Err(wrong_kind("bimodule datum", instance(d)?));
        };
        let Instance::BimoduleDatum(mm) = instance(m)? else {
            return Err(wrong_kind("bimodule datum", instance(m)?));
        };
        let r = morita::picard_conjugate(dd, mm, tol).map_err(lib_err)?;
        put_instance(out, Instance::BimoduleDatum(r))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_are_recorded() {
        let mut h: *mut MgInstance = std::ptr::null_mut();
        let s = unsafe { mg_instance_parse(c"{".as_ptr(), &mut h) };
        assert_eq!(s, MgStatus::ParseError);
        let msg = mg_last_error_message();
        assert!(!msg.is_null());
        unsafe { mg_string_free(msg) };
        let s = unsafe { mg_instance_parse(std::ptr::null(), &mut h) };
        assert_eq!(s, MgStatus::NullPointer);
    }
}
