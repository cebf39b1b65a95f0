//! C ABI over the `oeg` pipeline.
//!
//! Conventions:
//! - every function returns an [`OegStatus`] code; `OEG_STATUS_OK` is 0
//! - out-parameters are written only on success
//! - handles are opaque pointers created and released by this library
//! - `oeg_last_error_message` returns a thread-local description of the most
//!   recent failure
//!
//! The companion header is generated into `include/oeg.h` at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_double};
use std::path::Path;

use oeg::config::PipelineConfig;
use oeg::manifold::{center_landmarks, polar_factor, psd_distance, LandmarkFrame, ManifoldConfig};
use oeg::{pipeline, OegError};

/// Result code of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OegStatus {
    /// Call succeeded.
    Ok = 0,
    /// A pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid input data or configuration.
    InvalidInput = 3,
    /// A required artifact is missing on disk.
    MissingArtifact = 4,
    /// An artifact was produced under a different configuration.
    ConfigMismatch = 5,
    /// Numerical failure inside the pipeline.
    Numerical = 6,
    /// Filesystem or serialization failure.
    Io = 7,
    /// An output buffer was too small.
    BufferTooSmall = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap_or_default());
}

fn status_of(err: &OegError) -> OegStatus {
    match err {
        OegError::MissingArtifact(_) => OegStatus::MissingArtifact,
        OegError::ConfigMismatch { .. } => OegStatus::ConfigMismatch,
        OegError::Io(_) | OegError::Json(_) | OegError::Format { .. } => OegStatus::Io,
        OegError::InvalidInput(_) | OegError::InvalidScore { .. } => OegStatus::InvalidInput,
        _ => OegStatus::Numerical,
    }
}

fn fail(err: OegError) -> OegStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// # Safety
/// `ptr` must be a valid NUL-terminated C string.
unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, OegStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(OegStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        OegStatus::InvalidUtf8
    })
}

/// Description of the most recent failure on this thread.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oeg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// configuration handle

/// Opaque pipeline configuration.
pub struct OegConfig {
    inner: PipelineConfig,
}

/// Create a configuration with default values. Free with [`oeg_config_free`].
#[no_mangle]
pub extern "C" fn oeg_config_new() -> *mut OegConfig {
    Box::into_raw(Box::new(OegConfig {
        inner: PipelineConfig::default(),
    }))
}

/// Load a configuration from a flat `key = value` file.
///
/// # Safety
/// `path` must be a valid C string; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn oeg_config_load(
    path: *const c_char,
    out: *mut *mut OegConfig,
) -> OegStatus {
    if out.is_null() {
        set_error("null output pointer");
        return OegStatus::NullPointer;
    }
    let path = match cstr(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match PipelineConfig::from_file(Path::new(path)) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(OegConfig { inner: cfg }));
            OegStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Override one configuration key from its textual representation.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be C strings.
#[no_mangle]
pub unsafe extern "C" fn oeg_config_set(
    cfg: *mut OegConfig,
    key: *const c_char,
    value: *const c_char,
) -> OegStatus {
    if cfg.is_null() {
        set_error("null config handle");
        return OegStatus::NullPointer;
    }
    let (key, value) = match (cstr(key), cstr(value)) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(c), _) | (_, Err(c)) => return c,
    };
    match (*cfg).inner.set(key, value) {
        Ok(()) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Hex SHA-256 hash of the configuration, as embedded in artifacts.
///
/// `buf` receives a NUL-terminated string; `buf_len` must be at least 65.
///
/// # Safety
/// `cfg` must come from this library; `buf` must hold `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn oeg_config_hash(
    cfg: *const OegConfig,
    buf: *mut c_char,
    buf_len: usize,
) -> OegStatus {
    if cfg.is_null() || buf.is_null() {
        set_error("null argument");
        return OegStatus::NullPointer;
    }
    let hash = (*cfg).inner.hash();
    if buf_len < hash.len() + 1 {
        set_error("hash buffer must hold at least 65 bytes");
        return OegStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(hash.as_ptr() as *const c_char, buf, hash.len());
    *buf.add(hash.len()) = 0;
    OegStatus::Ok
}

/// Release a configuration handle. Null is ignored.
///
/// # Safety
/// `cfg` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oeg_config_free(cfg: *mut OegConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

// ---------------------------------------------------------------------------
// file-based pipeline stages

macro_rules! path_arg {
    ($ptr:expr) => {
        match cstr($ptr) {
            Ok(s) => Path::new(s),
            Err(code) => return code,
        }
    };
}

fn config_ref<'a>(cfg: *const OegConfig) -> Result<&'a PipelineConfig, OegStatus> {
    if cfg.is_null() {
        set_error("null config handle");
        return Err(OegStatus::NullPointer);
    }
    Ok(unsafe { &(*cfg).inner })
}

/// Generate a synthetic cohort dataset from a spec JSON file.
///
/// # Safety
/// All pointers must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn oeg_synth(spec_path: *const c_char, out_dir: *const c_char) -> OegStatus {
    let spec_path = path_arg!(spec_path);
    let out_dir = path_arg!(out_dir);
    let text = match std::fs::read_to_string(spec_path) {
        Ok(t) => t,
        Err(_) => {
            return fail(OegError::MissingArtifact(spec_path.display().to_string()));
        }
    };
    let spec = match serde_json_from(&text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match pipeline::cmd_synth(&spec, out_dir) {
        Ok(_) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

fn serde_json_from(text: &str) -> oeg::Result<oeg::synth::CohortSpec> {
    Ok(serde_json::from_str(text)?)
}

/// Extract feature atoms for every recording of a dataset.
///
/// # Safety
/// Pointers must be valid C strings / handles from this library.
#[no_mangle]
pub unsafe extern "C" fn oeg_features(
    dataset: *const c_char,
    out_dir: *const c_char,
    cfg: *const OegConfig,
) -> OegStatus {
    let dataset = path_arg!(dataset);
    let out_dir = path_arg!(out_dir);
    let cfg = match config_ref(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match pipeline::cmd_features(dataset, out_dir, cfg) {
        Ok(()) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Train the background mixture over stored features.
///
/// # Safety
/// Pointers must be valid C strings / handles from this library.
#[no_mangle]
pub unsafe extern "C" fn oeg_train_ubm(
    dataset: *const c_char,
    features: *const c_char,
    out_path: *const c_char,
    cfg: *const OegConfig,
) -> OegStatus {
    let dataset = path_arg!(dataset);
    let features = path_arg!(features);
    let out_path = path_arg!(out_path);
    let cfg = match config_ref(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match pipeline::cmd_train_ubm(dataset, features, out_path, cfg) {
        Ok(()) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

/// MAP-adapt every recording and store supervectors.
///
/// # Safety
/// Pointers must be valid C strings / handles from this library.
#[no_mangle]
pub unsafe extern "C" fn oeg_adapt(
    dataset: *const c_char,
    features: *const c_char,
    model: *const c_char,
    out_dir: *const c_char,
    cfg: *const OegConfig,
) -> OegStatus {
    let dataset = path_arg!(dataset);
    let features = path_arg!(features);
    let model = path_arg!(model);
    let out_dir = path_arg!(out_dir);
    let cfg = match config_ref(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match pipeline::cmd_adapt(dataset, features, model, out_dir, cfg) {
        Ok(()) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Write the dense kernel matrix over admission supervectors.
///
/// # Safety
/// Pointers must be valid C strings / handles from this library.
#[no_mangle]
pub unsafe extern "C" fn oeg_kernel_matrix(
    dataset: *const c_char,
    supervectors: *const c_char,
    out_path: *const c_char,
    cfg: *const OegConfig,
) -> OegStatus {
    let dataset = path_arg!(dataset);
    let supervectors = path_arg!(supervectors);
    let out_path = path_arg!(out_path);
    let cfg = match config_ref(cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match pipeline::cmd_kernel_matrix(dataset, supervectors, out_path, cfg) {
        Ok(_) => OegStatus::Ok,
        Err(e) => fail(e),
    }
}

// ---------------------------------------------------------------------------
// direct numerics

/// Cone distance between two landmark configurations.
///
/// `a` and `b` are row-major `n x d` coordinate arrays with `d` of 2 or 3.
/// `k` weights the positive-definite term, `eps` is the degeneracy floor;
/// pass 1.0 and 1e-8 for the defaults.
///
/// # Safety
/// `a` and `b` must each point to `n * d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oeg_shape_distance(
    a: *const c_double,
    b: *const c_double,
    n: usize,
    d: usize,
    k: c_double,
    eps: c_double,
    out: *mut c_double,
) -> OegStatus {
    if a.is_null() || b.is_null() || out.is_null() {
        set_error("null argument");
        return OegStatus::NullPointer;
    }
    let frame = |ptr: *const c_double| -> oeg::Result<LandmarkFrame> {
        let slice = std::slice::from_raw_parts(ptr, n * d);
        let points = nalgebra::DMatrix::from_row_slice(n, d, slice);
        LandmarkFrame::new(points)
    };
    let cfg = ManifoldConfig { k, eps };
    let dist = (|| -> oeg::Result<f64> {
        let fa = polar_factor(&center_landmarks(&frame(a)?), &cfg)?;
        let fb = polar_factor(&center_landmarks(&frame(b)?), &cfg)?;
        psd_distance(&fa, &fb, &cfg)
    })();
    match dist {
        Ok(v) => {
            *out = v;
            OegStatus::Ok
        }
        Err(e) => fail(e),
    }
}
