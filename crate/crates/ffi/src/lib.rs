//! C interface: load a run configuration and a trained model, fly single
//! trials and query mode probabilities.
//!
//! Every function returns an [`AerocapStatus`]. On failure the message is
//! kept per thread and can be read with [`aerocap_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aerocapture::config::RunConfig;
use aerocapture::dynamics::TrajectoryMode;
use aerocapture::gmvae::GmvaeModel;
use aerocapture::montecarlo::{run_trial, CampaignSettings, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AerocapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Runtime = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AerocapMode {
    Capture = 0,
    Escape = 1,
    Impact = 2,
    /// The trial could not be flown.
    Failed = -1,
}

impl From<Option<TrajectoryMode>> for AerocapMode {
    fn from(m: Option<TrajectoryMode>) -> Self {
        match m {
            Some(TrajectoryMode::Capture) => AerocapMode::Capture,
            Some(TrajectoryMode::Escape) => AerocapMode::Escape,
            Some(TrajectoryMode::Impact) => AerocapMode::Impact,
            None => AerocapMode::Failed,
        }
    }
}

/// Result of one trial. Quantities that do not apply are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AerocapTrialResult {
    pub trial: u64,
    pub mode: AerocapMode,
    /// Apoapsis radius [m].
    pub r_a: f64,
    /// Apoapsis error [m], captures only.
    pub r_a_error: f64,
    pub corrected_cycles: u32,
    /// Time guidance first enabled [s].
    pub enabled_at: f64,
}

/// Campaign settings resolved from a run configuration.
pub struct AerocapConfig {
    settings: CampaignSettings,
}

/// A trained mode-indicator model.
pub struct AerocapModel {
    model: GmvaeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

type Fallible = Result<(), (AerocapStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible) -> AerocapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AerocapStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AerocapStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, (AerocapStatus, String)> {
    if s.is_null() {
        return Err((AerocapStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| (AerocapStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn null(what: &str) -> (AerocapStatus, String) {
    (AerocapStatus::NullPointer, format!("{what} is null"))
}

fn settings_from(cfg: RunConfig) -> Result<Box<AerocapConfig>, (AerocapStatus, String)> {
    let settings = cfg.campaign_settings().map_err(|e| (AerocapStatus::InvalidArgument, e.to_string()))?;
    Ok(Box::new(AerocapConfig { settings }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aerocap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// in bytes, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn aerocap_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Parses a TOML run configuration held in memory.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aerocap_config_from_toml(toml: *const c_char, out: *mut *mut AerocapConfig) -> AerocapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(toml, "toml")?;
        let cfg = RunConfig::from_toml(text, "<memory>").map_err(|e| (AerocapStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(settings_from(cfg)?);
        Ok(())
    })
}

/// Loads a TOML run configuration from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aerocap_config_load(path: *const c_char, out: *mut *mut AerocapConfig) -> AerocapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let cfg = RunConfig::load(Path::new(path)).map_err(|e| {
            let status = match e {
                aerocapture::config::ConfigError::Io { .. } => AerocapStatus::Io,
                aerocapture::config::ConfigError::Parse { .. } => AerocapStatus::Parse,
                _ => AerocapStatus::InvalidArgument,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(settings_from(cfg)?);
        Ok(())
    })
}

/// Built-in near-escape defaults with the given master seed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aerocap_config_default(seed: u64, out: *mut *mut AerocapConfig) -> AerocapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(settings_from(RunConfig { seed, ..RunConfig::default() })?);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aerocap_config_free(cfg: *mut AerocapConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Loads a model written by `aerocap train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aerocap_model_load(path: *const c_char, out: *mut *mut AerocapModel) -> AerocapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model = GmvaeModel::load(Path::new(path)).map_err(|e| (AerocapStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(AerocapModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aerocap_model_free(model: *mut AerocapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of the normalized energy vector the model expects, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aerocap_model_input_dim(model: *const AerocapModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_dim())
}

/// Capture, escape and impact probabilities of a normalized energy vector.
///
/// # Safety
/// `x` must point to `n` doubles and `out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn aerocap_model_mode_probabilities(
    model: *const AerocapModel,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> AerocapStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n != m.model.input_dim() {
            return Err((AerocapStatus::InvalidArgument, format!("expected {} values, got {n}", m.model.input_dim())));
        }
        let p = m.model.mode_probabilities(std::slice::from_raw_parts(x, n)).map_err(|e| (AerocapStatus::Runtime, e.to_string()))?;
        ptr::copy_nonoverlapping(p.as_ptr(), out, 3);
        Ok(())
    })
}

/// Flies one dispersed trial. `variant` is one of `fnpag`, `pipag`,
/// `fnpag-noff`, `pipag-noff`; the πPAG variants need a model.
///
/// # Safety
/// `cfg` must be a live handle, `model` null or a live handle, `variant` a
/// NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aerocap_run_trial(
    cfg: *const AerocapConfig,
    variant: *const c_char,
    model: *const AerocapModel,
    trial: u64,
    out: *mut AerocapTrialResult,
) -> AerocapStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let variant: Variant = str_arg(variant, "variant")?.parse().map_err(|e: String| (AerocapStatus::InvalidArgument, e))?;
        let model = model.as_ref().map(|m| &m.model);
        let r = run_trial(&cfg.settings, variant, model, trial).result;
        if let Some(e) = r.error {
            return Err((AerocapStatus::Runtime, e));
        }
        *out = AerocapTrialResult {
            trial: r.trial,
            mode: r.mode.into(),
            r_a: r.r_a.unwrap_or(f64::NAN),
            r_a_error: r.r_a_error.unwrap_or(f64::NAN),
            corrected_cycles: r.corrected_cycles,
            enabled_at: r.enabled_at.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}
