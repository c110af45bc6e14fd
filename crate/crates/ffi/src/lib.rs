//! C interface to `decaylab`.
//!
//! Every function returns a [`DlStatus`]. On failure a message is kept per
//! thread and can be read with [`dl_last_error`]. Handles are opaque and must
//! be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use decaylab::hamiltonian::{CouplingAmplitude, ModelKind, ModelSpec};
use decaylab::harness::{self, ensemble::run_ensemble, ExperimentConfig};
use decaylab::ldos::{FmLdos, LambShiftModel};
use decaylab::observables::ObservableSeries;
use decaylab::propagator::PropagatorOptions;
use decaylab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    Ok = 0,
    InvalidParameter = 1,
    OutOfRange = 2,
    DimensionExceeded = 3,
    Numerical = 4,
    InsufficientData = 5,
    Config = 6,
    PartialEnsemble = 7,
    Io = 8,
    NullPointer = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlModelKind {
    Friedrichs = 0,
    Wigner = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlObservable {
    Time = 0,
    SurvivalProbability = 1,
    CoreWidth = 2,
    Spreading = 3,
    Percentile25 = 4,
    Percentile50 = 5,
    Percentile75 = 6,
    SurvivalError = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DlTimeScales {
    pub t0: f64,
    pub t_inf: f64,
    pub t_h: f64,
    pub t_c: f64,
}

/// A model specification.
pub struct DlModel(ModelSpec);

/// Time series of ensemble-averaged observables.
pub struct DlSeries(ObservableSeries);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DlStatus {
    match e {
        Error::InvalidParameter(_) => DlStatus::InvalidParameter,
        Error::OutOfRange { .. } => DlStatus::OutOfRange,
        Error::DimensionExceeded { .. } => DlStatus::DimensionExceeded,
        Error::Numerical(_) => DlStatus::Numerical,
        Error::InsufficientData(_) => DlStatus::InsufficientData,
        Error::Config(_) => DlStatus::Config,
        Error::PartialEnsemble { .. } => DlStatus::PartialEnsemble,
        Error::Io(_) => DlStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), (DlStatus, String)>>(f: F) -> DlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (DlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DlStatus, String) {
    (DlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], (DlStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length, or 0
/// when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Create a model on the lattice `[-b, b]`. `rms` selects deterministic
/// coupling magnitudes instead of Gaussian ones.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_model_new(
    kind: DlModelKind,
    s: f64,
    epsilon: f64,
    rho: f64,
    b: usize,
    seed: u64,
    rms: bool,
    out: *mut *mut DlModel,
) -> DlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let kind = match kind {
            DlModelKind::Friedrichs => ModelKind::Friedrichs,
            DlModelKind::Wigner => ModelKind::Wigner,
        };
        let amp = if rms { CouplingAmplitude::Rms } else { CouplingAmplitude::Gaussian };
        let spec = ModelSpec::new(kind, s, epsilon, rho, b, b, seed).map_err(lib)?.with_amplitude(amp);
        *out = Box::into_raw(Box::new(DlModel(spec)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`dl_model_new`], and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dl_model_free(model: *mut DlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dl_model_time_scales(model: *const DlModel, out: *mut DlTimeScales) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ts = m.0.profile().time_scales().map_err(lib)?;
        *out = DlTimeScales {
            t0: ts.t0,
            t_inf: ts.t_inf,
            t_h: ts.t_h,
            t_c: ts.t_c,
        };
        Ok(())
    })
}

/// Analytic Friedrichs LDOS of the model's band profile at `omega`.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dl_fm_ldos(model: *const DlModel, omega: f64, out: *mut f64) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let l = FmLdos::new(m.0.profile(), LambShiftModel::Finite).map_err(lib)?;
        *out = l.density(omega).map_err(lib)?;
        Ok(())
    })
}

/// Propagate `count` realizations (seeds derived from `seed`) and average
/// the observables at the `n` sample `times`. `threads = 0` uses all cores.
///
/// # Safety
/// `model` and `out` must be valid; `times` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn dl_simulate(
    model: *const DlModel,
    times: *const f64,
    n: usize,
    count: usize,
    seed: u64,
    threads: usize,
    out: *mut *mut DlSeries,
) -> DlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let times = slice(times, n, "times")?;
        let threads = if threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            threads
        };
        let series = run_ensemble(&m.0, times, PropagatorOptions::default(), count, seed, threads)
            .map_err(lib)?
            .series;
        *out = Box::into_raw(Box::new(DlSeries(series)));
        Ok(())
    })
}

/// # Safety
/// `series` must be null or come from [`dl_simulate`], and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dl_series_free(series: *mut DlSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Number of samples in `series` (0 for null).
///
/// # Safety
/// `series` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dl_series_len(series: *const DlSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.len())
}

/// Copy one observable column into `buf`, which must hold at least
/// `dl_series_len` values.
///
/// # Safety
/// `series` must be valid; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dl_series_get(
    series: *const DlSeries,
    which: DlObservable,
    buf: *mut f64,
    len: usize,
) -> DlStatus {
    guard(|| {
        let s = &series.as_ref().ok_or_else(|| null("series"))?.0;
        let col = match which {
            DlObservable::Time => &s.times,
            DlObservable::SurvivalProbability => &s.p0,
            DlObservable::CoreWidth => &s.de_core,
            DlObservable::Spreading => &s.de_sprd,
            DlObservable::Percentile25 => &s.e25,
            DlObservable::Percentile50 => &s.e50,
            DlObservable::Percentile75 => &s.e75,
            DlObservable::SurvivalError => &s.p0_err,
        };
        if len < col.len() {
            return Err((
                DlStatus::BufferTooSmall,
                format!("buffer holds {len} values, need {}", col.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(col.as_ptr(), buf, col.len());
        Ok(())
    })
}

/// Run an experiment described by a TOML config. On success `*report_json`
/// receives the run report, to be released with [`dl_string_free`].
///
/// # Safety
/// `toml` must be a NUL-terminated string; `report_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dl_run_config(toml: *const c_char, report_json: *mut *mut c_char) -> DlStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        *report_json = ptr::null_mut();
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|e| (DlStatus::Config, format!("config is not UTF-8: {e}")))?;
        let cfg = ExperimentConfig::from_toml_str(text).map_err(lib)?;
        let report = harness::run(&cfg).map_err(lib)?;
        let json = serde_json::to_string(&report).map_err(|e| (DlStatus::Io, e.to_string()))?;
        *report_json = CString::new(json).map_err(|e| (DlStatus::Io, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or come from this library, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_cover_library_errors() {
        assert_eq!(status_of(&Error::Numerical("x".into())), DlStatus::Numerical);
        assert_eq!(
            status_of(&Error::PartialEnsemble {
                succeeded: 1,
                requested: 5,
                first_error: String::new()
            }),
            DlStatus::PartialEnsemble
        );
    }

    #[test]
    fn panics_become_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, DlStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let n = unsafe { dl_last_error(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(n, msg.len());
        assert!(msg.contains("boom"));
    }
}
