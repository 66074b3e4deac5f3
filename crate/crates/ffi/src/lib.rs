//! C ABI over the `ggm` library.
//!
//! Objects are opaque heap handles created by `ggm_*_new`/`ggm_*_load`
//! functions and released with the matching `ggm_*_free`. Every fallible
//! call returns a [`GgmStatus`]; on failure the message is available from
//! [`ggm_last_error_message`] on the same thread. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ggm::anomaly::{self, RegionScorer};
use ggm::model::GraphKind;
use ggm::{glasso, graphs, stats, Dataset, Error, GaussianModel, PriorGraph, SolverConfig};
use ndarray::Array2;

/// Result codes shared by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    LabelMismatch = 4,
    Io = 5,
    Parse = 6,
    Numerical = 7,
    /// The solver hit its sweep limit; the returned model is the last iterate.
    NotConverged = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque dataset (subjects × regions with labels).
pub struct GgmDataset(Dataset);

/// Opaque prior graph.
pub struct GgmGraph(PriorGraph);

/// Opaque fitted model.
pub struct GgmModel(GaussianModel);

/// Solver settings passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GgmSolverConfig {
    pub tol: f64,
    pub max_sweeps: usize,
    pub penalize_diagonal: bool,
}

impl From<GgmSolverConfig> for SolverConfig {
    fn from(c: GgmSolverConfig) -> Self {
        SolverConfig {
            tol: c.tol,
            max_sweeps: c.max_sweeps,
            penalize_diagonal: c.penalize_diagonal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GgmStatus {
    match e {
        Error::Dimension(_) => GgmStatus::DimensionMismatch,
        Error::LabelMismatch { .. } => GgmStatus::LabelMismatch,
        Error::Io { .. } => GgmStatus::Io,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => GgmStatus::Parse,
        e if e.is_numerical() => GgmStatus::Numerical,
        _ => GgmStatus::InvalidArgument,
    }
}

fn fail(status: GgmStatus, msg: &str) -> GgmStatus {
    set_last_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F>(f: F) -> GgmStatus
where
    F: FnOnce() -> Result<GgmStatus, (GgmStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            if status == GgmStatus::Ok {
                set_last_error("");
            }
            status
        }
        Ok(Err((status, msg))) => fail(status, &msg),
        Err(_) => fail(GgmStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> (GgmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (GgmStatus, String) {
    (GgmStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `len` readable elements.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (GgmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_err(what));
    }
    // SAFETY: non-null and the caller vouches for `len` elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn path_arg(p: *const c_char) -> Result<String, (GgmStatus, String)> {
    if p.is_null() {
        return Err(null_err("path"));
    }
    // SAFETY: non-null and NUL-terminated per the caller's contract.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| (GgmStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<GgmStatus, (GgmStatus, String)> {
    if out.is_null() {
        return Err(null_err("output handle"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(GgmStatus::Ok)
}

/// # Safety
/// `h` must be null or a live handle of type `T` from this library.
unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, (GgmStatus, String)> {
    // SAFETY: the caller guarantees liveness and provenance.
    unsafe { h.as_ref() }.ok_or_else(|| null_err(what))
}

/// Message of the most recent failure on this thread (empty after a success).
/// The pointer stays valid until the next `ggm_*` call on this thread.
#[no_mangle]
pub extern "C" fn ggm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default solver settings.
#[no_mangle]
pub extern "C" fn ggm_solver_config_default() -> GgmSolverConfig {
    let c = SolverConfig::default();
    GgmSolverConfig {
        tol: c.tol,
        max_sweeps: c.max_sweeps,
        penalize_diagonal: c.penalize_diagonal,
    }
}

/// Builds a dataset from a row-major `n_subjects × n_regions` array with
/// generated labels.
///
/// # Safety
/// `values` must point to `n_subjects * n_regions` readable doubles and
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn ggm_dataset_new(
    values: *const f64,
    n_subjects: usize,
    n_regions: usize,
    out: *mut *mut GgmDataset,
) -> GgmStatus {
    guard(|| {
        let len = n_subjects
            .checked_mul(n_regions)
            .ok_or((GgmStatus::InvalidArgument, "size overflow".to_string()))?;
        // SAFETY: forwarded caller contract.
        let v = unsafe { slice(values, len, "values") }?;
        let arr = Array2::from_shape_vec((n_subjects, n_regions), v.to_vec())
            .map_err(|e| (GgmStatus::DimensionMismatch, e.to_string()))?;
        let ds = Dataset::from_values(arr).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmDataset(ds)) }
    })
}

/// Reads a dataset CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_dataset_load_csv(path: *const c_char, out: *mut *mut GgmDataset) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let p = unsafe { path_arg(path) }?;
        let ds = Dataset::load(p).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmDataset(ds)) }
    })
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ggm_dataset_shape(ds: *const GgmDataset, n_subjects: *mut usize, n_regions: *mut usize) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let ds = unsafe { handle(ds, "dataset") }?;
        if n_subjects.is_null() || n_regions.is_null() {
            return Err(null_err("output"));
        }
        // SAFETY: checked non-null.
        unsafe {
            *n_subjects = ds.0.n_subjects();
            *n_regions = ds.0.n_regions();
        }
        Ok(GgmStatus::Ok)
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ggm_dataset_free(ds: *mut GgmDataset) {
    if !ds.is_null() {
        // SAFETY: allocated by `emit` via `Box::into_raw`.
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Graph on `d` nodes from `n_edges` index pairs stored as `[i0, j0, i1, j1, ...]`.
///
/// # Safety
/// `edges` must point to `2 * n_edges` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_from_edges(
    d: usize,
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut GgmGraph,
) -> GgmStatus {
    guard(|| {
        let len = n_edges
            .checked_mul(2)
            .ok_or((GgmStatus::InvalidArgument, "size overflow".to_string()))?;
        // SAFETY: forwarded caller contract.
        let flat = unsafe { slice(edges, len, "edges") }?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let g = PriorGraph::from_edges(d, &pairs, GraphKind::Custom).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmGraph(g)) }
    })
}

/// Four-neighbour `rows × cols` grid graph.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_lattice(rows: usize, cols: usize, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let g = graphs::lattice_graph(rows, cols).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmGraph(g)) }
    })
}

/// Graph without edges.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_node_only(d: usize, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let g = graphs::node_only_graph(d).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmGraph(g)) }
    })
}

/// Complete graph.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_full(d: usize, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        let g = graphs::full_graph(d).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmGraph(g)) }
    })
}

/// Reads a graph JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_load_json(path: *const c_char, out: *mut *mut GgmGraph) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let p = unsafe { path_arg(path) }?;
        let g = PriorGraph::load(p).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmGraph(g)) }
    })
}

/// Number of undirected edges, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_edge_count(g: *const GgmGraph) -> usize {
    // SAFETY: forwarded caller contract.
    unsafe { g.as_ref() }.map_or(0, |g| g.0.edge_count())
}

/// # Safety
/// `g` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ggm_graph_free(g: *mut GgmGraph) {
    if !g.is_null() {
        // SAFETY: allocated by `emit` via `Box::into_raw`.
        drop(unsafe { Box::from_raw(g) });
    }
}

/// Fits mean and precision of `data` under `graph` with penalty `rho`.
///
/// Returns `NotConverged` (with `*out` set) when the sweep limit is reached.
///
/// # Safety
/// `data` and `graph` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_fit(
    data: *const GgmDataset,
    graph: *const GgmGraph,
    rho: f64,
    config: GgmSolverConfig,
    out: *mut *mut GgmModel,
) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (data, graph) = unsafe { (handle(data, "dataset")?, handle(graph, "graph")?) };
        if out.is_null() {
            return Err(null_err("output handle"));
        }
        let model = glasso::fit_model(&data.0, &graph.0, rho, &config.into()).map_err(lib_err)?;
        let converged = model.fit_stats().converged;
        let iterations = model.fit_stats().iterations;
        // SAFETY: checked non-null above.
        unsafe { emit(out, GgmModel(model)) }?;
        if converged {
            Ok(GgmStatus::Ok)
        } else {
            Err((
                GgmStatus::NotConverged,
                format!("solver stopped after {iterations} sweeps without converging"),
            ))
        }
    })
}

/// Reads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_model_load_json(path: *const c_char, out: *mut *mut GgmModel) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let p = unsafe { path_arg(path) }?;
        let m = GaussianModel::load(p).map_err(lib_err)?;
        // SAFETY: forwarded caller contract.
        unsafe { emit(out, GgmModel(m)) }
    })
}

/// Writes a model JSON file.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ggm_model_save_json(model: *const GgmModel, path: *const c_char) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { handle(model, "model") }?;
        // SAFETY: forwarded caller contract.
        let p = unsafe { path_arg(path) }?;
        m.0.save(p).map_err(lib_err)?;
        Ok(GgmStatus::Ok)
    })
}

/// Number of regions, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ggm_model_dim(model: *const GgmModel) -> usize {
    // SAFETY: forwarded caller contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.0.dim())
}

/// Copies the `d × d` precision matrix into `out` (row-major, `len >= d*d`).
///
/// # Safety
/// `model` must be a live handle and `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ggm_model_precision(model: *const GgmModel, out: *mut f64, len: usize) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { handle(model, "model") }?;
        let p = m.0.precision();
        let need = p.len();
        if len < need {
            return Err((GgmStatus::BufferTooSmall, format!("need {need} doubles, got {len}")));
        }
        if out.is_null() {
            return Err(null_err("out"));
        }
        for (k, v) in p.iter().enumerate() {
            // SAFETY: k < need <= len and `out` is writable for `len` doubles.
            unsafe { *out.add(k) = *v };
        }
        Ok(GgmStatus::Ok)
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ggm_model_free(model: *mut GgmModel) {
    if !model.is_null() {
        // SAFETY: allocated by `emit` via `Box::into_raw`.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Mahalanobis distance of `z` (length `len` = model dimension).
///
/// # Safety
/// `model` must be a live handle, `z` readable for `len` doubles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_mahalanobis(model: *const GgmModel, z: *const f64, len: usize, out: *mut f64) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { handle(model, "model") }?;
        // SAFETY: forwarded caller contract.
        let z = unsafe { slice(z, len, "z") }?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let v = anomaly::mahalanobis(&m.0, ndarray::ArrayView1::from(z)).map_err(lib_err)?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(GgmStatus::Ok)
    })
}

/// Greedy region sort of `z`. Each output array holds `len` entries:
/// `order` the region indices, `distances` the accumulated squared distances
/// `D_1..D_len`, and `abnormality` the per-position ratios. `cutoff`
/// receives the number of regions kept as normal.
///
/// # Safety
/// `model` must be a live handle, `z` readable for `len` doubles and every
/// output pointer writable for `len` elements (`cutoff` for one).
#[no_mangle]
pub unsafe extern "C" fn ggm_greedy_sort(
    model: *const GgmModel,
    z: *const f64,
    len: usize,
    order: *mut usize,
    distances: *mut f64,
    abnormality: *mut f64,
    cutoff: *mut usize,
) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { handle(model, "model") }?;
        // SAFETY: forwarded caller contract.
        let z = unsafe { slice(z, len, "z") }?;
        if order.is_null() || distances.is_null() || abnormality.is_null() || cutoff.is_null() {
            return Err(null_err("output array"));
        }
        let scorer = RegionScorer::new(&m.0).map_err(lib_err)?;
        let sr = scorer.greedy_sort(ndarray::ArrayView1::from(z)).map_err(lib_err)?;
        for k in 0..len {
            // SAFETY: each output holds `len` elements per the contract.
            unsafe {
                *order.add(k) = sr.order[k];
                *distances.add(k) = sr.distances[k];
                *abnormality.add(k) = sr.abnormality[k];
            }
        }
        // SAFETY: checked non-null.
        unsafe { *cutoff = sr.cutoff };
        Ok(GgmStatus::Ok)
    })
}

/// χ² CDF with `k` degrees of freedom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_chi2_cdf(x: f64, k: u32, out: *mut f64) -> GgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let v = stats::chi2_cdf(x, k).map_err(lib_err)?;
        // SAFETY: checked non-null.
        unsafe { *out = v };
        Ok(GgmStatus::Ok)
    })
}

/// Area under the ROC curve for positive scores `pos` against negatives `neg`.
///
/// # Safety
/// `pos`/`neg` must be readable for `n_pos`/`n_neg` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ggm_roc_auc(
    pos: *const f64,
    n_pos: usize,
    neg: *const f64,
    n_neg: usize,
    out: *mut f64,
) -> GgmStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (p, n) = unsafe { (slice(pos, n_pos, "pos")?, slice(neg, n_neg, "neg")?) };
        if out.is_null() {
            return Err(null_err("out"));
        }
        let roc = stats::roc_auc(p, n).map_err(lib_err)?;
        // SAFETY: checked non-null.
        unsafe { *out = roc.auc };
        Ok(GgmStatus::Ok)
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ggm_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
