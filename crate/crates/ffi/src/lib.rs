//! C ABI over the `lastar` library.
//!
//! Objects are opaque handles created by `lastar_*` constructors and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`LastarStatus`]; on failure a description is available from
//! [`lastar_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lastar::glasso::{empirical_covariance, estimate_superstructure, GlassoConfig};
use lastar::graph::{dag_to_cpdag, Cpdag, Mark};
use lastar::io::{read_dataset_file, GraphJson};
use lastar::local::{local_astar, LocalConfig};
use lastar::metrics::shd_cpdag;
use lastar::pipeline::{run_exact, Method};
use lastar::sem::{random_er_dag, random_weights, sample, Dataset, WeightedDag};
use lastar::Error;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LastarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IndexOutOfRange = 3,
    Cyclic = 4,
    NotExtendable = 5,
    InconsistentMarks = 6,
    TooLarge = 7,
    ClusterTooLarge = 8,
    SingularInput = 9,
    NotEnoughSamples = 10,
    Infeasible = 11,
    Timeout = 12,
    InvalidConstraints = 13,
    Parse = 14,
    Io = 15,
    Panic = 16,
}

impl From<&Error> for LastarStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::IndexOutOfRange { .. } => LastarStatus::IndexOutOfRange,
            Error::InvalidArgument(_) => LastarStatus::InvalidArgument,
            Error::Cyclic => LastarStatus::Cyclic,
            Error::NotExtendable => LastarStatus::NotExtendable,
            Error::InconsistentMarks { .. } => LastarStatus::InconsistentMarks,
            Error::TooLarge { .. } => LastarStatus::TooLarge,
            Error::ClusterTooLarge { .. } => LastarStatus::ClusterTooLarge,
            Error::SingularInput(_) => LastarStatus::SingularInput,
            Error::NotEnoughSamples { .. } => LastarStatus::NotEnoughSamples,
            Error::Infeasible => LastarStatus::Infeasible,
            Error::Timeout => LastarStatus::Timeout,
            Error::InvalidConstraints(_) => LastarStatus::InvalidConstraints,
            Error::Parse(_) | Error::Json(_) | Error::Csv(_) => LastarStatus::Parse,
            Error::Io(_) => LastarStatus::Io,
        }
    }
}

/// Search method for [`lastar_search`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LastarMethod {
    Dp = 0,
    Astar = 1,
    AstarSs = 2,
    LocalAstar = 3,
}

impl From<LastarMethod> for Method {
    fn from(m: LastarMethod) -> Self {
        match m {
            LastarMethod::Dp => Method::Dp,
            LastarMethod::Astar => Method::Astar,
            LastarMethod::AstarSs => Method::AstarSs,
            LastarMethod::LocalAstar => Method::LocalAstar,
        }
    }
}

/// Edge mark between `i` and `j` reported by [`lastar_graph_mark`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LastarMark {
    None = 0,
    /// `i -> j`
    Forward = 1,
    /// `j -> i`
    Backward = 2,
    Undirected = 3,
}

/// Ground-truth linear-Gaussian model.
pub struct LastarModel {
    inner: WeightedDag,
}

/// `n x d` sample matrix.
pub struct LastarDataset {
    inner: Dataset,
}

/// Partially directed graph; undirected graphs have only undirected marks.
pub struct LastarGraph {
    inner: Cpdag,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> LastarStatus {
    let status = LastarStatus::from(&e);
    set_error(e.to_string());
    status
}

fn null_arg(name: &str) -> LastarStatus {
    set_error(format!("{name} is null"));
    LastarStatus::NullPointer
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), LastarStatus>) -> LastarStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LastarStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".to_string());
            LastarStatus::Panic
        }
    }
}

fn lift<T>(r: lastar::Result<T>) -> Result<T, LastarStatus> {
    r.map_err(fail)
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, LastarStatus> {
    // SAFETY: caller passes a live handle or null.
    unsafe { p.as_ref() }.ok_or_else(|| null_arg(name))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), LastarStatus> {
    if out.is_null() {
        return Err(null_arg("out"));
    }
    // SAFETY: checked non-null; caller provides writable storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next `lastar_*` call on the same thread.
#[no_mangle]
pub extern "C" fn lastar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Random ER DAG with expected degree `degree`, weights and noise variances
/// drawn from `seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_model_simulate(
    d: usize,
    degree: f64,
    seed: u64,
    out: *mut *mut LastarModel,
) -> LastarStatus {
    guard(|| {
        let dag = lift(random_er_dag(d, degree, seed))?;
        let inner = random_weights(&dag, seed.wrapping_add(1));
        unsafe { store(out, LastarModel { inner }) }
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lastar_model_num_vars(model: *const LastarModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.inner.num_vars())
}

/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_model_sample(
    model: *const LastarModel,
    n: usize,
    seed: u64,
    out: *mut *mut LastarDataset,
) -> LastarStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let inner = lift(sample(&m.inner, n, seed))?;
        unsafe { store(out, LastarDataset { inner }) }
    })
}

/// CPDAG of the model's equivalence class.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_model_true_cpdag(
    model: *const LastarModel,
    out: *mut *mut LastarGraph,
) -> LastarStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let inner = dag_to_cpdag(m.inner.dag());
        unsafe { store(out, LastarGraph { inner }) }
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lastar_model_free(model: *mut LastarModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Dataset from `n * d` row-major values.
///
/// # Safety
/// `values` must point to `n * d` readable doubles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_dataset_from_rows(
    values: *const f64,
    n: usize,
    d: usize,
    out: *mut *mut LastarDataset,
) -> LastarStatus {
    guard(|| {
        if values.is_null() {
            return Err(null_arg("values"));
        }
        let len = n
            .checked_mul(d)
            .ok_or_else(|| fail(Error::InvalidArgument("n * d overflows".into())))?;
        // SAFETY: caller guarantees n * d readable values.
        let slice = unsafe { std::slice::from_raw_parts(values, len) };
        let inner = lift(Dataset::new(DMatrix::from_row_slice(n, d, slice)))?;
        unsafe { store(out, LastarDataset { inner }) }
    })
}

/// Dataset from a CSV file with a header row.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_dataset_from_csv(
    path: *const c_char,
    out: *mut *mut LastarDataset,
) -> LastarStatus {
    guard(|| {
        if path.is_null() {
            return Err(null_arg("path"));
        }
        let p = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(Error::InvalidArgument("path is not UTF-8".into())))?;
        let inner = lift(read_dataset_file(Path::new(p)))?;
        unsafe { store(out, LastarDataset { inner }) }
    })
}

/// # Safety
/// `data` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lastar_dataset_num_samples(data: *const LastarDataset) -> usize {
    unsafe { data.as_ref() }.map_or(0, |x| x.inner.n())
}

/// # Safety
/// `data` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lastar_dataset_num_vars(data: *const LastarDataset) -> usize {
    unsafe { data.as_ref() }.map_or(0, |x| x.inner.d())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lastar_dataset_free(data: *mut LastarDataset) {
    if !data.is_null() {
        drop(unsafe { Box::from_raw(data) });
    }
}

/// Graphical-lasso super-structure. A negative `lambda` selects the
/// dimension-dependent default.
///
/// # Safety
/// `data` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_estimate_superstructure(
    data: *const LastarDataset,
    lambda: f64,
    out: *mut *mut LastarGraph,
) -> LastarStatus {
    guard(|| {
        let x = unsafe { deref(data, "data") }?;
        let mut cfg = GlassoConfig::for_dimension(x.inner.d());
        if lambda >= 0.0 {
            cfg.lambda = lambda;
        }
        lift(cfg.validate())?;
        let (g, _) = lift(estimate_superstructure(&x.inner, &cfg))?;
        unsafe { store(out, LastarGraph { inner: Cpdag::from_undirected(&g) }) }
    })
}

/// Learns a CPDAG from `data`. `superstructure` may be null except for
/// `AstarSs` and `LocalAstar`, which read its skeleton.
///
/// # Safety
/// Handles must be live or null as described; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_search(
    data: *const LastarDataset,
    method: LastarMethod,
    superstructure: *const LastarGraph,
    out: *mut *mut LastarGraph,
) -> LastarStatus {
    guard(|| {
        let x = unsafe { deref(data, "data") }?;
        let ss = unsafe { superstructure.as_ref() }.map(|g| g.inner.skeleton());
        if let Some(g) = &ss {
            if g.num_vars() != x.inner.d() {
                return Err(fail(Error::InvalidArgument(
                    "superstructure size does not match the data".into(),
                )));
            }
        }
        let method = Method::from(method);
        if method.needs_superstructure() && ss.is_none() {
            return Err(null_arg("superstructure"));
        }
        let cov = lift(empirical_covariance(&x.inner))?;
        let n = x.inner.n();
        let inner = match method {
            Method::LocalAstar => {
                let g = ss.expect("checked");
                lift(local_astar(&cov, n, &g, &LocalConfig::default()))?.cpdag
            }
            m => dag_to_cpdag(&lift(run_exact(m, &cov, n, ss.as_ref(), None))?.dag),
        };
        unsafe { store(out, LastarGraph { inner }) }
    })
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lastar_graph_num_vars(graph: *const LastarGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.inner.num_vars())
}

/// # Safety
/// `graph` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_graph_mark(
    graph: *const LastarGraph,
    i: usize,
    j: usize,
    out: *mut LastarMark,
) -> LastarStatus {
    guard(|| {
        let g = unsafe { deref(graph, "graph") }?;
        let d = g.inner.num_vars();
        if i >= d || j >= d {
            return Err(fail(Error::IndexOutOfRange {
                index: i.max(j),
                num_vars: d,
            }));
        }
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let m = match g.inner.mark(i, j) {
            Mark::None => LastarMark::None,
            Mark::Forward => LastarMark::Forward,
            Mark::Backward => LastarMark::Backward,
            Mark::Undirected => LastarMark::Undirected,
        };
        unsafe { *out = m };
        Ok(())
    })
}

/// Graph as `{"d": .., "edges": [[i, j, "->" | "--"], ..]}`. Release the
/// string with [`lastar_string_free`].
///
/// # Safety
/// `graph` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_graph_to_json(
    graph: *const LastarGraph,
    out: *mut *mut c_char,
) -> LastarStatus {
    guard(|| {
        let g = unsafe { deref(graph, "graph") }?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let text = lift(serde_json::to_string(&GraphJson::from_cpdag(&g.inner)).map_err(Error::from))?;
        let c = CString::new(text).expect("JSON has no NUL bytes");
        unsafe { *out = c.into_raw() };
        Ok(())
    })
}

/// Structural Hamming distance between two CPDAGs.
///
/// # Safety
/// Both handles must be live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lastar_shd(
    est: *const LastarGraph,
    truth: *const LastarGraph,
    out: *mut usize,
) -> LastarStatus {
    guard(|| {
        let a = unsafe { deref(est, "est") }?;
        let b = unsafe { deref(truth, "truth") }?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let v = lift(shd_cpdag(&a.inner, &b.inner))?;
        unsafe { *out = v };
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lastar_graph_free(graph: *mut LastarGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lastar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_covers_errors() {
        assert_eq!(LastarStatus::from(&Error::Timeout), LastarStatus::Timeout);
        assert_eq!(
            LastarStatus::from(&Error::Parse("x".into())),
            LastarStatus::Parse
        );
    }

    #[test]
    fn null_out_is_reported() {
        let s = unsafe { lastar_model_simulate(3, 1.0, 0, ptr::null_mut()) };
        assert_eq!(s, LastarStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(lastar_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "out is null");
    }
}
