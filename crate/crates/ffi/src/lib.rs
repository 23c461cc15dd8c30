//! C interface to the storygauge engine.
//!
//! Every function returns an [`SgStatus`]. On failure the message is kept in
//! a thread-local slot readable through [`sg_last_error`]. Handles are
//! opaque and must be released with their matching `*_free` function.
//! Strings handed out by the library are NUL-terminated UTF-8 and must be
//! released with [`sg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use storygauge::corpus::{import_csv, CorpusError};
use storygauge::evalstats::{weighted_kappa, EvalError, Weighting};
use storygauge::interpret::QualityReport;
use storygauge::metrics::Metric;
use storygauge::pipeline::{self, BundleStore, ModelBundle, PipelineError, ProjectConfig, StoryInput};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    MalformedCsv = 4,
    TrainingFailed = 5,
    NotFound = 6,
    CorruptBundle = 7,
    Io = 8,
    /// The requested value is undefined for this input.
    Unavailable = 9,
    Panic = 10,
}

/// Kappa disagreement weights.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgWeighting {
    Linear = 0,
    Quadratic = 1,
}

/// A trained model bundle.
pub struct SgBundle {
    inner: ModelBundle,
}

/// The quality report of one scored story.
pub struct SgReport {
    inner: QualityReport,
}

/// Number of metrics in every report.
pub const SG_METRIC_COUNT: usize = 8;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SgStatus, String);

impl Failure {
    fn new(status: SgStatus, message: impl Into<String>) -> Self {
        Failure(status, message.into())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Corpus(CorpusError::InvalidMapping(_)) | PipelineError::Config(_) => SgStatus::InvalidArgument,
            PipelineError::InvalidProjectId(_) => SgStatus::InvalidArgument,
            PipelineError::Corpus(_) => SgStatus::MalformedCsv,
            PipelineError::Model(_) | PipelineError::Glossary(_) => SgStatus::TrainingFailed,
            PipelineError::BundleMissing(_) => SgStatus::NotFound,
            PipelineError::StoreIo { .. } => SgStatus::Io,
            PipelineError::CorruptBundle { .. } => SgStatus::CorruptBundle,
        };
        Failure(status, e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        PipelineError::from(e).into()
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {message}"));
            SgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SgStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SgStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(SgStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(SgStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::new(SgStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(p)
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(SgStatus::InvalidArgument, "output contains a NUL byte"))
}

fn metric_at(index: usize) -> Result<Metric, Failure> {
    Metric::ALL
        .get(index)
        .copied()
        .ok_or_else(|| Failure::new(SgStatus::InvalidArgument, format!("metric index {index} out of range")))
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Canonical name of metric `index` (0-based), or NULL when out of range.
#[no_mangle]
pub extern "C" fn sg_metric_name(index: usize) -> *const c_char {
    const NAMES: [&str; SG_METRIC_COUNT] = [
        "format_complete\0",
        "readable\0",
        "customer_speak\0",
        "small\0",
        "independent\0",
        "word_sparse\0",
        "sentence_sparse\0",
        "easy_language\0",
    ];
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr().cast())
}

/// Imports a CSV backlog and trains a bundle.
///
/// `config_toml` may be NULL for defaults. `out_skipped` and `out_rejected`
/// may be NULL; otherwise they receive the import row counts.
///
/// # Safety
/// `project_id` and `config_toml` must be NUL-terminated strings or NULL,
/// `csv` must point to `csv_len` readable bytes, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_train_csv(
    project_id: *const c_char,
    csv: *const u8,
    csv_len: usize,
    config_toml: *const c_char,
    out: *mut *mut SgBundle,
    out_skipped: *mut usize,
    out_rejected: *mut usize,
) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let project_id = str_arg(project_id, "project_id")?;
        pipeline::validate_project_id(project_id)?;
        let bytes = slice_arg(csv, csv_len, "csv")?;
        let config = if config_toml.is_null() {
            ProjectConfig::default()
        } else {
            ProjectConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let outcome = import_csv(bytes, &config.mapping, project_id)?;
        let bundle = pipeline::train(&outcome.backlog, &config)?;
        if !out_skipped.is_null() {
            *out_skipped = outcome.skipped_count;
        }
        if !out_rejected.is_null() {
            *out_rejected = outcome.rejected.len();
        }
        *out = Box::into_raw(Box::new(SgBundle { inner: bundle }));
        Ok(())
    })
}

/// Loads the latest stored bundle of a project.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_load(store_root: *const c_char, project_id: *const c_char, out: *mut *mut SgBundle) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let store = BundleStore::new(str_arg(store_root, "store_root")?);
        let bundle = store.load(str_arg(project_id, "project_id")?)?;
        *out = Box::into_raw(Box::new(SgBundle { inner: bundle }));
        Ok(())
    })
}

/// Stores the bundle under the next free version and updates its version.
///
/// # Safety
/// `bundle` must be a live handle; `out_version` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_save(bundle: *mut SgBundle, store_root: *const c_char, out_version: *mut u64) -> SgStatus {
    guard(|| {
        let bundle = bundle.as_mut().ok_or_else(|| Failure::new(SgStatus::NullPointer, "`bundle` is null"))?;
        let store = BundleStore::new(str_arg(store_root, "store_root")?);
        let version = store.save_next(&mut bundle.inner)?;
        if !out_version.is_null() {
            *out_version = version;
        }
        Ok(())
    })
}

/// Version number of a bundle; a freshly trained bundle reports 1.
///
/// # Safety
/// `bundle` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_version(bundle: *const SgBundle) -> u64 {
    bundle.as_ref().map_or(0, |b| b.inner.bundle_version)
}

/// Quartiles of every metric over the training backlog, as a JSON object
/// keyed by metric name.
///
/// # Safety
/// `bundle` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_percentiles_json(bundle: *const SgBundle, out: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let bundle = ref_arg(bundle, "bundle")?;
        let json = serde_json::to_string(&bundle.inner.bands.metrics)
            .map_err(|e| Failure::new(SgStatus::InvalidArgument, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `bundle` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_bundle_free(bundle: *mut SgBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Scores free story text against a bundle.
///
/// # Safety
/// `bundle` must be a live handle, `text` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sg_score(bundle: *const SgBundle, text: *const c_char, out: *mut *mut SgReport) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let bundle = ref_arg(bundle, "bundle")?;
        let input = StoryInput::text(str_arg(text, "text")?);
        if input.is_blank() {
            return Err(Failure::new(SgStatus::InvalidArgument, "story text is empty"));
        }
        let report = pipeline::score(&bundle.inner, &input);
        *out = Box::into_raw(Box::new(SgReport { inner: report }));
        Ok(())
    })
}

/// Value of metric `index` in `[0, 1]`. Returns `Unavailable` when the
/// metric could not be computed for this story.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_report_value(report: *const SgReport, index: usize, out: *mut f64) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let report = ref_arg(report, "report")?;
        let metric = metric_at(index)?;
        match report.inner.value(metric) {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err(Failure::new(SgStatus::Unavailable, format!("{metric} is unavailable for this story"))),
        }
    })
}

/// The full report as JSON.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sg_report_json(report: *const SgReport, out: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let report = ref_arg(report, "report")?;
        let json = serde_json::to_string(&report.inner).map_err(|e| Failure::new(SgStatus::InvalidArgument, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_report_free(report: *mut SgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Weighted kappa of two raters on the 1-5 scale. `weighting` is an
/// `SgWeighting` value. Returns `Unavailable` when a rater used a single
/// category.
///
/// # Safety
/// `a` and `b` must each point to `len` readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sg_weighted_kappa(a: *const u8, b: *const u8, len: usize, weighting: u32, out: *mut f64) -> SgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (a, b) = (slice_arg(a, len, "a")?, slice_arg(b, len, "b")?);
        let weighting = match weighting {
            w if w == SgWeighting::Linear as u32 => Weighting::Linear,
            w if w == SgWeighting::Quadratic as u32 => Weighting::Quadratic,
            w => return Err(Failure::new(SgStatus::InvalidArgument, format!("unknown weighting {w}"))),
        };
        match weighted_kappa(a, b, weighting) {
            Ok(k) => {
                *out = k;
                Ok(())
            }
            Err(e @ EvalError::DegenerateMarginals) => Err(Failure::new(SgStatus::Unavailable, e.to_string())),
            Err(e) => Err(Failure::new(SgStatus::InvalidArgument, e.to_string())),
        }
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
