//! C ABI over `lpcann`.
//!
//! Every fallible call returns an [`LpcannStatus`]; on failure the message is
//! available from [`lpcann_last_error_message`] on the same thread until the
//! next failing call. Handles are opaque and must be released with the
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lpcann::dataio::{generate_synthetic, read_csv, Dataset, SyntheticRanges};
use lpcann::discovery::DEFAULT_FROZEN_EXPONENTS;
use lpcann::kinematics::LoadMode;
use lpcann::model::{stress, ModelFamily, ParamVector, TermMask, N_EXPONENTS, N_TERMS};
use lpcann::objective::{total_loss, LossSpec, Normalization, PenaltyConfig, Reduction};
use lpcann::optimizer::{fit, AdamConfig, FitResult, InitStrategy};
use lpcann::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpcannStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Parse = 4,
    Schema = 5,
    Io = 6,
    Overflow = 7,
    Divergence = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpcannFamily {
    Invariant8 = 0,
    Stretch8 = 1,
    MooneyRivlin = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpcannMode {
    UniaxialTension = 0,
    UniaxialCompression = 1,
    SimpleShear = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpcannReduction {
    Mean = 0,
    Sum = 1,
}

/// Loaded or generated stress-stretch data.
pub struct LpcannDataset(Dataset);

/// Outcome of a single optimizer run.
pub struct LpcannFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> LpcannStatus {
    match err {
        Error::Config(_) => LpcannStatus::Config,
        Error::Domain(_) => LpcannStatus::Domain,
        Error::Parse { .. } => LpcannStatus::Parse,
        Error::Schema { .. } => LpcannStatus::Schema,
        Error::Io(_) => LpcannStatus::Io,
        Error::Overflow { .. } => LpcannStatus::Overflow,
        Error::Divergence { .. } => LpcannStatus::Divergence,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpcannStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpcannStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            LpcannStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            LpcannStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass pointers obtained from this library or valid C storage.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn family_of(f: LpcannFamily) -> ModelFamily {
    match f {
        LpcannFamily::Invariant8 => ModelFamily::Invariant8,
        LpcannFamily::Stretch8 => ModelFamily::Stretch8,
        LpcannFamily::MooneyRivlin => ModelFamily::MooneyRivlin,
    }
}

fn mode_of(m: LpcannMode) -> LoadMode {
    match m {
        LpcannMode::UniaxialTension => LoadMode::UniaxialTension,
        LpcannMode::UniaxialCompression => LoadMode::UniaxialCompression,
        LpcannMode::SimpleShear => LoadMode::SimpleShear,
    }
}

fn spec_of(r: LpcannReduction) -> LossSpec {
    let reduction = match r {
        LpcannReduction::Mean => Reduction::Mean,
        LpcannReduction::Sum => Reduction::Sum,
    };
    LossSpec::new(Normalization::MaxStress, reduction)
}

/// `amplitudes` points at 8 values; `exponents` at 4 values or is null.
unsafe fn params_from(
    family: LpcannFamily,
    amplitudes: *const f64,
    exponents: *const f64,
) -> Result<ParamVector, Failure> {
    if amplitudes.is_null() {
        return Err(Failure::Null("amplitudes"));
    }
    let mut amps = [0.0; N_TERMS];
    amps.copy_from_slice(std::slice::from_raw_parts(amplitudes, N_TERMS));
    let family = family_of(family);
    let params = match family {
        ModelFamily::Invariant8 => {
            let mut exps = DEFAULT_FROZEN_EXPONENTS;
            if !exponents.is_null() {
                exps.copy_from_slice(std::slice::from_raw_parts(exponents, N_EXPONENTS));
            }
            ParamVector::invariant(amps, exps)
        }
        ModelFamily::Stretch8 => ParamVector::stretch(amps),
        ModelFamily::MooneyRivlin => ParamVector::mooney_rivlin(amps[0], amps[4]),
    };
    params.validate()?;
    Ok(params)
}

fn out_ptr<T>(out: *mut T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn lpcann_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a `mode,control,stress_kpa` CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lpcann_dataset_read_csv(path: *const c_char, out: *mut *mut LpcannDataset) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let path = non_null(path, "path")?;
        let path = CStr::from_ptr(path).to_str().map_err(|e| Error::Config(format!("path is not UTF-8: {e}")))?;
        let data = read_csv(Path::new(path))?;
        *out = Box::into_raw(Box::new(LpcannDataset(data)));
        Ok(())
    })
}

/// Noise-free synthetic data over the default tension, compression and shear ranges.
///
/// # Safety
/// `amplitudes` must point at 8 doubles; `exponents` at 4 doubles or be null.
#[no_mangle]
pub unsafe extern "C" fn lpcann_dataset_synthetic(
    family: LpcannFamily,
    amplitudes: *const f64,
    exponents: *const f64,
    increments: usize,
    out: *mut *mut LpcannDataset,
) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let params = params_from(family, amplitudes, exponents)?;
        let data = generate_synthetic(&params, &SyntheticRanges::default(), increments, None)?;
        *out = Box::into_raw(Box::new(LpcannDataset(data)));
        Ok(())
    })
}

/// Number of data points, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcann_dataset_len(dataset: *const LpcannDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lpcann_dataset_free(dataset: *mut LpcannDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// First Piola stress of one load state.
///
/// # Safety
/// Pointer arguments follow [`lpcann_dataset_synthetic`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lpcann_stress(
    family: LpcannFamily,
    amplitudes: *const f64,
    exponents: *const f64,
    mode: LpcannMode,
    control: f64,
    out: *mut f64,
) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let params = params_from(family, amplitudes, exponents)?;
        *out = stress(&params, mode_of(mode), control)?.total;
        Ok(())
    })
}

/// Normalized data loss plus `alpha * sum |w|^p`.
///
/// # Safety
/// Pointer arguments follow [`lpcann_dataset_synthetic`]; `dataset` must be a
/// live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lpcann_loss(
    family: LpcannFamily,
    amplitudes: *const f64,
    exponents: *const f64,
    dataset: *const LpcannDataset,
    reduction: LpcannReduction,
    p: f64,
    alpha: f64,
    out: *mut f64,
) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let data = non_null(dataset, "dataset")?;
        let params = params_from(family, amplitudes, exponents)?;
        *out = total_loss(&params, &data.0, spec_of(reduction), &PenaltyConfig::new(p, alpha))?.total;
        Ok(())
    })
}

/// Runs projected Adam from a seeded uniform start.
///
/// `mask_bits` selects terms with bit `k` for term `k` (zero-based); 0 means
/// every term the family has. `max_epochs` of 0 keeps the default budget.
///
/// # Safety
/// `dataset` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit(
    family: LpcannFamily,
    mask_bits: u8,
    dataset: *const LpcannDataset,
    reduction: LpcannReduction,
    p: f64,
    alpha: f64,
    max_epochs: usize,
    seed: u64,
    out: *mut *mut LpcannFit,
) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let data = non_null(dataset, "dataset")?;
        let family = family_of(family);
        let mask = if mask_bits == 0 { family.full_mask() } else { TermMask::from_bits(mask_bits) };
        let mut adam = AdamConfig::default().with_seed(seed);
        if max_epochs > 0 {
            adam.max_epochs = max_epochs;
        }
        let result = fit(
            family,
            mask,
            &data.0,
            spec_of(reduction),
            &PenaltyConfig::new(p, alpha),
            &adam,
            &InitStrategy::UniformRandom,
        )?;
        *out = Box::into_raw(Box::new(LpcannFit(result)));
        Ok(())
    })
}

/// Copies the fitted amplitudes (8) and exponents (4) into caller storage.
/// Either output may be null.
///
/// # Safety
/// `fit` must be a live handle; non-null outputs must hold 8 and 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_params(
    fit: *const LpcannFit,
    amplitudes_out: *mut f64,
    exponents_out: *mut f64,
) -> LpcannStatus {
    guard(|| {
        let f = non_null(fit, "fit")?;
        if !amplitudes_out.is_null() {
            ptr::copy_nonoverlapping(f.0.params.amplitudes.as_ptr(), amplitudes_out, N_TERMS);
        }
        if !exponents_out.is_null() {
            ptr::copy_nonoverlapping(f.0.params.exponents.as_ptr(), exponents_out, N_EXPONENTS);
        }
        Ok(())
    })
}

/// Data loss (without penalty) of the fitted parameters; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_data_loss(fit: *const LpcannFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.loss.data())
}

/// Penalized loss of the fitted parameters; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_total_loss(fit: *const LpcannFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.loss.total)
}

/// Number of nonzero amplitudes; 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_active_terms(fit: *const LpcannFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.active_terms)
}

/// Full fit result as a JSON string. Release it with [`lpcann_string_free`].
///
/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_to_json(fit: *const LpcannFit, out: *mut *mut c_char) -> LpcannStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let f = non_null(fit, "fit")?;
        let json = serde_json::to_string(&f.0).map_err(|e| Error::Io(e.to_string()))?;
        *out = CString::new(json).map_err(|e| Error::Io(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lpcann_fit_free(fit: *mut LpcannFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lpcann_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
