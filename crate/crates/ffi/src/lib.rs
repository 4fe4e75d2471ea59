//! C ABI over `mmc-core`.
//!
//! All objects are opaque handles created by `mmc_*_new`/`mmc_*_fit`-style
//! functions and released with the matching `*_free`. Fallible functions
//! return an [`MmcStatus`]; on failure a message is available from
//! [`mmc_last_error`] on the same thread. No function unwinds across the
//! boundary: panics are caught and reported as `MMC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mmc_core::clustering::{run_mmc, ClusterAssignment, ClusterParams, KernelKind};
use mmc_core::data::{normalize_minmax, Dataset};
use mmc_core::kernels::{IkModel, Mechanism};
use mmc_core::metrics::{ami_score, f1_score};
use mmc_core::synthetic::{generate_synthetic, Family};
use mmc_core::{Error, ErrorClass};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// Invalid parameter or configuration.
    Config = 2,
    /// Malformed or unusable input data.
    Data = 3,
    /// The algorithm could not produce a result (e.g. too few components).
    Algorithm = 4,
    /// An internal panic was caught.
    Panic = 5,
}

/// Kernel used by [`mmc_cluster`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmcKernel {
    IkHypersphere = 0,
    IkVoronoi = 1,
    GaussianNystrom = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmcMechanism {
    Hypersphere = 0,
    Voronoi = 1,
}

/// Clustering parameters. Fill with [`mmc_params_default`] and override.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MmcClusterParams {
    pub k: usize,
    pub s: usize,
    pub tau: f64,
    pub kernel: MmcKernel,
    /// ψ for the isolation kernels (a whole number), σ for the Gaussian kernel.
    pub kernel_param: f64,
    pub t: usize,
    pub landmarks: usize,
    pub seed: u64,
    pub max_refine_iters: usize,
}

/// Opaque dataset handle.
pub struct MmcDataset(Dataset);

/// Opaque clustering result handle.
pub struct MmcAssignment(ClusterAssignment);

/// Opaque fitted isolation kernel handle.
pub struct MmcIkModel(IkModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> MmcStatus {
    match e.class() {
        ErrorClass::Config => MmcStatus::Config,
        ErrorClass::Data => MmcStatus::Data,
        ErrorClass::Algorithm => MmcStatus::Algorithm,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (MmcStatus, String)>) -> MmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmcStatus::Ok,
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
            MmcStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (MmcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (MmcStatus, String) {
    (MmcStatus::Null, format!("{name} is null"))
}

fn config(msg: impl Into<String>) -> (MmcStatus, String) {
    (MmcStatus::Config, msg.into())
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a dataset from `n * d` row-major coordinates. `labels` may be
/// null; otherwise it must hold `n` class labels.
///
/// # Safety
/// `points` must be valid for `n * d` reads, `labels` (if non-null) for `n`
/// reads, and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_new(
    points: *const f64,
    n: usize,
    d: usize,
    labels: *const usize,
    out: *mut *mut MmcDataset,
) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if points.is_null() {
            return Err(null("points"));
        }
        let len = n.checked_mul(d).ok_or_else(|| config("n * d overflows"))?;
        // SAFETY: the caller guarantees `points` holds `n * d` values.
        let pts = unsafe { std::slice::from_raw_parts(points, len) }.to_vec();
        let lab = if labels.is_null() {
            None
        } else {
            // SAFETY: the caller guarantees `labels` holds `n` values.
            Some(unsafe { std::slice::from_raw_parts(labels, n) }.to_vec())
        };
        let ds = Dataset::from_flat(pts, d, lab).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(MmcDataset(ds))) };
        Ok(())
    })
}

/// Generates a labeled, normalized synthetic dataset. `family` accepts the
/// same names as the command line (e.g. `"3g"`, `"w50gaussian"`).
///
/// # Safety
/// `family` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_generate(
    family: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut MmcDataset,
) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if family.is_null() {
            return Err(null("family"));
        }
        // SAFETY: the caller guarantees a NUL-terminated string.
        let name = unsafe { CStr::from_ptr(family) }
            .to_str()
            .map_err(|_| config("family name is not UTF-8"))?;
        let fam: Family = name.parse().map_err(core_err)?;
        let ds = generate_synthetic(fam, n, seed).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(MmcDataset(ds))) };
        Ok(())
    })
}

/// Writes a min-max normalized copy of `data` to `out`.
///
/// # Safety
/// `data` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_normalize(data: *const MmcDataset, out: *mut *mut MmcDataset) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller passes a live handle or null.
        let ds = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        let norm = normalize_minmax(&ds.0);
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(MmcDataset(norm))) };
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `data` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_len(data: *const MmcDataset) -> usize {
    // SAFETY: the caller passes a live handle or null.
    unsafe { data.as_ref() }.map_or(0, |d| d.0.len())
}

/// Number of features, or 0 for a null handle.
///
/// # Safety
/// `data` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_dim(data: *const MmcDataset) -> usize {
    // SAFETY: the caller passes a live handle or null.
    unsafe { data.as_ref() }.map_or(0, |d| d.0.dim())
}

/// Copies the coordinates (row-major, `len * dim` values) into `buf`.
///
/// # Safety
/// `data` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_points(data: *const MmcDataset, buf: *mut f64, cap: usize) -> MmcStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let ds = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        copy_out(ds.0.points(), buf, cap)
    })
}

/// Copies the ground-truth labels into `buf`. Fails with a data error when
/// the dataset is unlabeled.
///
/// # Safety
/// `data` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_labels(data: *const MmcDataset, buf: *mut usize, cap: usize) -> MmcStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let ds = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        let labels = ds.0.labels().ok_or_else(|| core_err(Error::LabelsRequired("mmc_dataset_labels")))?;
        copy_out(labels, buf, cap)
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `data` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmc_dataset_free(data: *mut MmcDataset) {
    if !data.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(data) });
    }
}

fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize) -> Result<(), (MmcStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if cap < src.len() {
        return Err(config(format!("buffer holds {cap} values, {} needed", src.len())));
    }
    // SAFETY: `buf` is valid for `cap >= src.len()` writes per the caller's contract.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Fills `out` with the library defaults for the given kernel.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_params_default(
    kernel: MmcKernel,
    kernel_param: f64,
    k: usize,
    out: *mut MmcClusterParams,
) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = ClusterParams::new(k, KernelKind::IkHypersphere { psi: 1 });
        let p = MmcClusterParams {
            k,
            s: d.s,
            tau: d.tau,
            kernel,
            kernel_param,
            t: d.t,
            landmarks: d.landmarks,
            seed: d.seed,
            max_refine_iters: d.max_refine_iters,
        };
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = p };
        Ok(())
    })
}

fn to_params(p: &MmcClusterParams) -> Result<ClusterParams, (MmcStatus, String)> {
    let psi = || {
        if p.kernel_param >= 1.0 && p.kernel_param.fract() == 0.0 && p.kernel_param <= usize::MAX as f64 {
            Ok(p.kernel_param as usize)
        } else {
            Err(config(format!("psi must be a positive integer, got {}", p.kernel_param)))
        }
    };
    let kernel = match p.kernel {
        MmcKernel::IkHypersphere => KernelKind::IkHypersphere { psi: psi()? },
        MmcKernel::IkVoronoi => KernelKind::IkVoronoi { psi: psi()? },
        MmcKernel::GaussianNystrom => KernelKind::GaussianNystrom { sigma: p.kernel_param },
    };
    Ok(ClusterParams {
        k: p.k,
        s: p.s,
        tau: p.tau,
        kernel,
        t: p.t,
        landmarks: p.landmarks,
        seed: p.seed,
        max_refine_iters: p.max_refine_iters,
    })
}

/// Clusters `data`.
///
/// # Safety
/// `data` and `params` must be live pointers and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_cluster(
    data: *const MmcDataset,
    params: *const MmcClusterParams,
    out: *mut *mut MmcAssignment,
) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller passes live pointers or null.
        let ds = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        // SAFETY: as above.
        let p = unsafe { params.as_ref() }.ok_or_else(|| null("params"))?;
        let result = run_mmc(&ds.0, &to_params(p)?).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(MmcAssignment(result))) };
        Ok(())
    })
}

/// Number of labeled points, or 0 for a null handle.
///
/// # Safety
/// `a` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_len(a: *const MmcAssignment) -> usize {
    // SAFETY: the caller passes a live handle or null.
    unsafe { a.as_ref() }.map_or(0, |a| a.0.labels.len())
}

/// Copies the 0-based cluster labels into `buf`.
///
/// # Safety
/// `a` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_labels(a: *const MmcAssignment, buf: *mut usize, cap: usize) -> MmcStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let a = unsafe { a.as_ref() }.ok_or_else(|| null("assignment"))?;
        copy_out(&a.0.labels, buf, cap)
    })
}

/// Final objective `M(D)`, or NaN for a null handle.
///
/// # Safety
/// `a` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_objective(a: *const MmcAssignment) -> f64 {
    // SAFETY: the caller passes a live handle or null.
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.0.objective.total)
}

/// Objective before refinement, or NaN for a null handle.
///
/// # Safety
/// `a` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_objective_before_refine(a: *const MmcAssignment) -> f64 {
    // SAFETY: the caller passes a live handle or null.
    unsafe { a.as_ref() }.map_or(f64::NAN, |a| a.0.objective_before_refine.total)
}

/// Refinement iterations performed, or 0 for a null handle.
///
/// # Safety
/// `a` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_refine_iters(a: *const MmcAssignment) -> usize {
    // SAFETY: the caller passes a live handle or null.
    unsafe { a.as_ref() }.map_or(0, |a| a.0.refine_iters)
}

/// Releases an assignment. Null is ignored.
///
/// # Safety
/// `a` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmc_assignment_free(a: *mut MmcAssignment) {
    if !a.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(a) });
    }
}

/// # Safety
/// `pred` and `truth` must be valid for `n` reads, `out` for one write.
unsafe fn score(
    pred: *const usize,
    truth: *const usize,
    n: usize,
    out: *mut f64,
    f: fn(&[usize], &[usize]) -> mmc_core::Result<f64>,
) -> MmcStatus {
    guard(|| {
        if pred.is_null() {
            return Err(null("pred"));
        }
        if truth.is_null() {
            return Err(null("truth"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller guarantees `n` readable values behind each pointer.
        let (p, t) = unsafe { (std::slice::from_raw_parts(pred, n), std::slice::from_raw_parts(truth, n)) };
        let v = f(p, t).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = v };
        Ok(())
    })
}

/// Micro-averaged F1 under the optimal cluster-to-class matching.
///
/// # Safety
/// `pred` and `truth` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_f1_score(pred: *const usize, truth: *const usize, n: usize, out: *mut f64) -> MmcStatus {
    // SAFETY: forwarded caller contract.
    unsafe { score(pred, truth, n, out, f1_score) }
}

/// Adjusted mutual information (max normalization).
///
/// # Safety
/// `pred` and `truth` must be valid for `n` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_ami_score(pred: *const usize, truth: *const usize, n: usize, out: *mut f64) -> MmcStatus {
    // SAFETY: forwarded caller contract.
    unsafe { score(pred, truth, n, out, ami_score) }
}

/// Fits an isolation kernel on `data`.
///
/// # Safety
/// `data` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_ik_fit(
    data: *const MmcDataset,
    psi: usize,
    t: usize,
    mechanism: MmcMechanism,
    seed: u64,
    out: *mut *mut MmcIkModel,
) -> MmcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller passes a live handle or null.
        let ds = unsafe { data.as_ref() }.ok_or_else(|| null("data"))?;
        let mech = match mechanism {
            MmcMechanism::Hypersphere => Mechanism::Hypersphere,
            MmcMechanism::Voronoi => Mechanism::Voronoi,
        };
        let model = IkModel::fit(&ds.0, psi, t, mech, seed).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(MmcIkModel(model))) };
        Ok(())
    })
}

/// Isolation kernel similarity of two `d`-dimensional points.
///
/// # Safety
/// `model` must be a live handle, `x` and `y` valid for `d` reads and `out`
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn mmc_ik_similarity(
    model: *const MmcIkModel,
    x: *const f64,
    y: *const f64,
    d: usize,
    out: *mut f64,
) -> MmcStatus {
    guard(|| {
        // SAFETY: the caller passes a live handle or null.
        let m = unsafe { model.as_ref() }.ok_or_else(|| null("model"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        if y.is_null() {
            return Err(null("y"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: the caller guarantees `d` readable values behind each pointer.
        let (xs, ys) = unsafe { (std::slice::from_raw_parts(x, d), std::slice::from_raw_parts(y, d)) };
        let v = m.0.similarity(xs, ys).map_err(core_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = v };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmc_ik_free(model: *mut MmcIkModel) {
    if !model.is_null() {
        // SAFETY: the handle was created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(model) });
    }
}
