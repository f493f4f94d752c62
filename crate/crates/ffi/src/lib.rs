//! C interface to the ddf2pol classifier.
//!
//! Every fallible call returns a [`Ddf2polStatus`]; on failure the message
//! is kept per thread and read with [`ddf2pol_last_error`]. Models are
//! opaque handles released with [`ddf2pol_model_free`]. Patch buffers are
//! row-major `(batch, patch, patch, channels)` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ddf2pol::evaluation::{metrics, ConfusionMatrix};
use ddf2pol::model::{checkpoint, ModelConfig, ModelParams};
use ddf2pol::polsar::{pixel_descriptors, Coherency, NUM_COMPLEX, NUM_DESCRIPTORS};
use ddf2pol::tensor::Tensor;
use ddf2pol::Error;
use num_complex::Complex64;

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ddf2polStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Usage = 4,
    Format = 5,
    Data = 6,
    Spec = 7,
    Incompatible = 8,
    Io = 9,
    Image = 10,
    Panic = 11,
}

impl From<&Error> for Ddf2polStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => Ddf2polStatus::Shape,
            Error::Usage(_) => Ddf2polStatus::Usage,
            Error::Format { .. } => Ddf2polStatus::Format,
            Error::Data(_) => Ddf2polStatus::Data,
            Error::Spec(_) => Ddf2polStatus::Spec,
            Error::Incompatible(_) => Ddf2polStatus::Incompatible,
            Error::Io { .. } => Ddf2polStatus::Io,
            Error::Image { .. } => Ddf2polStatus::Image,
        }
    }
}

/// Opaque model handle.
pub struct Ddf2polModel {
    params: ModelParams,
}

/// Summary accuracies in [0, 1].
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ddf2polMetrics {
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
}

/// Real descriptor channels per pixel.
pub const DDF2POL_NUM_DESCRIPTORS: usize = 12;
/// Complex channels per pixel.
pub const DDF2POL_NUM_COMPLEX: usize = 6;

const _: () = assert!(DDF2POL_NUM_DESCRIPTORS == NUM_DESCRIPTORS && DDF2POL_NUM_COMPLEX == NUM_COMPLEX);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(Ddf2polStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(Ddf2polStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(Ddf2polStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, recording any error or panic for `ddf2pol_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Ddf2polStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            Ddf2polStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            Ddf2polStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const Ddf2polModel) -> Result<&'a Ddf2polModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn give(out: *mut *mut Ddf2polModel, params: ModelParams) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(Ddf2polModel { params }));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a freshly initialized model for odd `patch` >= 5 and
/// `num_classes` >= 2.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_new(
    patch: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut Ddf2polModel,
) -> Ddf2polStatus {
    guard(|| {
        let config = ModelConfig::new(patch, num_classes)?;
        give(out, ModelParams::init(config, seed))
    })
}

/// Reads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_load(path: *const c_char, out: *mut *mut Ddf2polModel) -> Ddf2polStatus {
    guard(|| {
        let params = checkpoint::load(&path_arg(path)?)?;
        give(out, params)
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_save(model: *const Ddf2polModel, path: *const c_char) -> Ddf2polStatus {
    guard(|| {
        let m = model_ref(model)?;
        checkpoint::save(&m.params, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_free(model: *mut Ddf2polModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of stored values, batch-norm running statistics included.
/// Zero for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_param_count(model: *const Ddf2polModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.ledger().total())
}

/// Patch side length; zero for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_patch(model: *const Ddf2polModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.patch)
}

/// Number of classes; zero for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_num_classes(model: *const Ddf2polModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.num_classes)
}

/// Inference logits for `batch` patches.
///
/// `real` holds `batch*patch*patch*12` normalized descriptors, `complex_re`
/// and `complex_im` hold `batch*patch*patch*6` values each, and `logits`
/// receives `batch*num_classes` values.
///
/// # Safety
/// Each buffer must be valid for the lengths above.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_model_predict(
    model: *const Ddf2polModel,
    batch: usize,
    real: *const f64,
    complex_re: *const f64,
    complex_im: *const f64,
    logits: *mut f64,
) -> Ddf2polStatus {
    guard(|| {
        let m = model_ref(model)?;
        if batch == 0 {
            return Err(invalid("batch is zero"));
        }
        let p = m.params.config.patch;
        let k = m.params.config.num_classes;
        let pixels = batch * p * p;
        let tensor = |ptr: *const f64, depth: usize, name: &str| -> Result<Tensor, Failure> {
            let data = slice(ptr, pixels * depth, name)?.to_vec();
            Ok(Tensor::from_vec(vec![batch, p, p, depth, 1], data)?)
        };
        let out = m.params.predict(
            &tensor(real, NUM_DESCRIPTORS, "real")?,
            &tensor(complex_re, NUM_COMPLEX, "complex_re")?,
            &tensor(complex_im, NUM_COMPLEX, "complex_im")?,
        )?;
        slice_mut(logits, batch * k, "logits")?.copy_from_slice(out.data());
        Ok(())
    })
}

/// The 12 real descriptors of one coherency matrix given as
/// `t11, t22, t33, re t12, im t12, re t13, im t13, re t23, im t23`.
///
/// # Safety
/// `t` must hold 9 values and `out` room for 12.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_pixel_descriptors(t: *const f64, out: *mut f64) -> Ddf2polStatus {
    guard(|| {
        let v = slice(t, 9, "t")?;
        let c = Coherency {
            t11: v[0],
            t22: v[1],
            t33: v[2],
            t12: Complex64::new(v[3], v[4]),
            t13: Complex64::new(v[5], v[6]),
            t23: Complex64::new(v[7], v[8]),
        };
        let (d, _) = pixel_descriptors(&c);
        slice_mut(out, NUM_DESCRIPTORS, "out")?.copy_from_slice(&d);
        Ok(())
    })
}

/// Accuracy metrics of a `k`x`k` confusion matrix (rows: reference).
/// `per_class` may be null; otherwise it receives `k` recalls.
///
/// # Safety
/// `counts` must hold `k*k` values, `out` be valid for one write and
/// `per_class` be null or hold `k` values.
#[no_mangle]
pub unsafe extern "C" fn ddf2pol_metrics(
    k: usize,
    counts: *const u64,
    out: *mut Ddf2polMetrics,
    per_class: *mut f64,
) -> Ddf2polStatus {
    guard(|| {
        let counts = slice(counts, k * k, "counts")?.to_vec();
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let m = metrics(&ConfusionMatrix::from_counts(k, counts)?)?;
        *out = Ddf2polMetrics { overall_accuracy: m.oa, average_accuracy: m.aa, kappa: m.kappa };
        if !per_class.is_null() {
            slice_mut(per_class, k, "per_class")?.copy_from_slice(&m.per_class);
        }
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddf2pol_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
