//! C ABI over `transfer_taxonomy`.
//!
//! Every fallible call returns a [`TtStatus`]; on failure the message is
//! available from [`tt_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function, and strings returned
//! through out-pointers are released with [`tt_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use transfer_taxonomy::ahp::{principal_eigenvector, AffinityMatrix, RatioMatrix};
use transfer_taxonomy::bip::{CostMode, SolverConfig};
use transfer_taxonomy::domain::{EvaluationRecordStore, TaskDictionary};
use transfer_taxonomy::engine::{normalize, solve_affinity};
use transfer_taxonomy::metrics::spearman_rho;
use transfer_taxonomy::sampler::SamplerConfig;
use transfer_taxonomy::service::SolveRequest;
use transfer_taxonomy::taxonomy::Taxonomy;
use transfer_taxonomy::{Error, ErrorCode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    Infeasible = 1,
    Schema = 2,
    ImageSet = 3,
    Convergence = 4,
    UnknownTask = 5,
    NullPointer = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtCostMode {
    Nodes = 0,
    Edges = 1,
}

pub struct TtDictionary(TaskDictionary);
pub struct TtAffinity(AffinityMatrix);
pub struct TtTaxonomy(Taxonomy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(e: Error) -> TtStatus {
    let status = match e.code() {
        ErrorCode::Infeasible => TtStatus::Infeasible,
        ErrorCode::Schema => TtStatus::Schema,
        ErrorCode::ImageSet => TtStatus::ImageSet,
        ErrorCode::Convergence => TtStatus::Convergence,
        ErrorCode::UnknownTask => TtStatus::UnknownTask,
    };
    set_error(format!("E:{}: {e}", e.code().as_str()));
    status
}

fn guard(body: impl FnOnce() -> Result<(), TtStatus>) -> TtStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TtStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("panic inside transfer_taxonomy".into());
            TtStatus::Panic
        }
    }
}

fn null_error(what: &str) -> TtStatus {
    set_error(format!("null pointer: {what}"));
    TtStatus::NullPointer
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, TtStatus> {
    if p.is_null() {
        return Err(null_error(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        TtStatus::InvalidUtf8
    })
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, TtStatus> {
    p.as_ref().ok_or_else(|| null_error(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), TtStatus> {
    if out.is_null() {
        return Err(null_error(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, text: String) -> Result<(), TtStatus> {
    if out.is_null() {
        return Err(null_error("out"));
    }
    *out = CString::new(text).expect("JSON has no nul bytes").into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_dictionary_from_json(
    json: *const c_char,
    out: *mut *mut TtDictionary,
) -> TtStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let dict = TaskDictionary::from_json(text).map_err(fail)?;
        put(out, TtDictionary(dict), "out")
    })
}

/// # Safety
/// `dict` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tt_dictionary_free(dict: *mut TtDictionary) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Number of tasks in the dictionary, 0 for NULL.
///
/// # Safety
/// `dict` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_dictionary_len(dict: *const TtDictionary) -> usize {
    dict.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_affinity_from_json(json: *const c_char, out: *mut *mut TtAffinity) -> TtStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let affinity = AffinityMatrix::from_json(text).map_err(fail)?;
        put(out, TtAffinity(affinity), "out")
    })
}

/// # Safety
/// `affinity` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_affinity_to_json(affinity: *const TtAffinity, out: *mut *mut c_char) -> TtStatus {
    guard(|| {
        let a = deref(affinity, "affinity")?;
        put_string(out, a.0.to_json())
    })
}

/// # Safety
/// `affinity` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tt_affinity_free(affinity: *mut TtAffinity) {
    if !affinity.is_null() {
        drop(Box::from_raw(affinity));
    }
}

/// Affinities from newline-delimited JSON records. A `max_order` of 0 means
/// the highest recorded order.
///
/// # Safety
/// `dict` must be a live handle, `records_ndjson` NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tt_normalize(
    dict: *const TtDictionary,
    records_ndjson: *const c_char,
    max_order: usize,
    beam_width: usize,
    out: *mut *mut TtAffinity,
) -> TtStatus {
    guard(|| {
        let dict = &deref(dict, "dict")?.0;
        let text = read_str(records_ndjson, "records_ndjson")?;
        let store = EvaluationRecordStore::read_ndjson(dict, text.as_bytes(), false).map_err(fail)?;
        let order = if max_order == 0 { store.max_order().max(1) } else { max_order };
        let cfg = SamplerConfig {
            beam_width,
            ..SamplerConfig::with_max_order(order)
        };
        let affinity = normalize(&store, dict, &cfg).map_err(fail)?;
        put(out, TtAffinity(affinity), "out")
    })
}

/// Optimal taxonomy with unit costs and importances.
///
/// # Safety
/// `affinity` and `dict` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_solve(
    affinity: *const TtAffinity,
    dict: *const TtDictionary,
    budget: f64,
    max_order: usize,
    cost_mode: TtCostMode,
    out: *mut *mut TtTaxonomy,
) -> TtStatus {
    guard(|| {
        let affinity = &deref(affinity, "affinity")?.0;
        let dict = &deref(dict, "dict")?.0;
        let cfg = SolverConfig {
            cost_mode: match cost_mode {
                TtCostMode::Nodes => CostMode::Nodes,
                TtCostMode::Edges => CostMode::Edges,
            },
            ..SolverConfig::with_budget(budget)
        };
        let t = solve_affinity(affinity, dict, max_order, &cfg).map_err(fail)?;
        put(out, TtTaxonomy(t), "out")
    })
}

/// Optimal taxonomy for a JSON request with the fields `budget`,
/// `max_order`, `importance`, `costs` and `cost_mode`.
///
/// # Safety
/// `affinity` and `dict` must be live handles, `request_json`
/// NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tt_solve_request(
    affinity: *const TtAffinity,
    dict: *const TtDictionary,
    request_json: *const c_char,
    out: *mut *mut TtTaxonomy,
) -> TtStatus {
    guard(|| {
        let affinity = &deref(affinity, "affinity")?.0;
        let dict = &deref(dict, "dict")?.0;
        let text = read_str(request_json, "request_json")?;
        let req: SolveRequest = serde_json::from_str(text).map_err(|e| fail(Error::json("request", e)))?;
        let t = solve_affinity(affinity, dict, req.max_order, &req.solver_config()).map_err(fail)?;
        put(out, TtTaxonomy(t), "out")
    })
}

/// # Safety
/// `taxonomy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_taxonomy_to_json(taxonomy: *const TtTaxonomy, out: *mut *mut c_char) -> TtStatus {
    guard(|| {
        let t = deref(taxonomy, "taxonomy")?;
        put_string(out, t.0.to_json())
    })
}

/// Objective of the taxonomy, NaN for NULL.
///
/// # Safety
/// `taxonomy` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_taxonomy_objective(taxonomy: *const TtTaxonomy) -> f64 {
    taxonomy.as_ref().map_or(f64::NAN, |t| t.0.objective)
}

/// # Safety
/// `taxonomy` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn tt_taxonomy_free(taxonomy: *mut TtTaxonomy) {
    if !taxonomy.is_null() {
        drop(Box::from_raw(taxonomy));
    }
}

/// Principal eigenvector, summing to 1, of the positive row-major `n x n`
/// matrix at `matrix`, written to the `n` doubles at `out`.
///
/// # Safety
/// `matrix` must hold `n * n` readable doubles and `out` `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn tt_principal_eigenvector(matrix: *const f64, n: usize, out: *mut f64) -> TtStatus {
    guard(|| {
        if matrix.is_null() || out.is_null() {
            return Err(null_error("matrix/out"));
        }
        let data = std::slice::from_raw_parts(matrix, n * n);
        let rows: Vec<Vec<f64>> = data.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
        let m = RatioMatrix::from_rows(&rows).map_err(fail)?;
        let v = principal_eigenvector(&m).map_err(fail)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&v);
        Ok(())
    })
}

/// Spearman's rho between two scorings of the same `n` items.
///
/// # Safety
/// `a` and `b` must hold `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_spearman(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> TtStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null_error("a/b/out"));
        }
        let index = |p: *const f64| -> BTreeMap<usize, f64> {
            std::slice::from_raw_parts(p, n).iter().copied().enumerate().collect()
        };
        *out = spearman_rho(&index(a), &index(b)).map_err(fail)?;
        Ok(())
    })
}
