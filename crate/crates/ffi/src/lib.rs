//! C ABI for the sgpdt engine: opaque model handles, status codes, and a
//! thread-local last-error message.
//!
//! Ownership rules: every `*mut SgpdtModel` returned by this library is
//! freed with [`sgpdt_model_free`]; every `*mut c_char` returned is freed
//! with [`sgpdt_string_free`]. Passing null where a non-null pointer is
//! required yields [`SgpdtStatus::InvalidArgument`], never a crash.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::slice;

use sgpdt::bench::{run_trial, RunConfig, Variant};
use sgpdt::data::{Dataset, SplitSpec};
use sgpdt::expr::{CaseMatrix, EvalCounter};
use sgpdt::{Error, FinalModel};

/// Result code of every fallible call. Nonzero codes leave a message
/// retrievable with `sgpdt_last_error`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpdtStatus {
    /// Success.
    Ok = 0,
    /// Invalid hyperparameter or option.
    Config = 1,
    /// Malformed or inconsistent input data.
    Data = 2,
    /// Internal invariant violation.
    Contract = 3,
    /// Null pointer, non-UTF-8 string, or zero-sized buffer.
    InvalidArgument = 4,
}

/// Fitness function and function set selector (see the core crate's
/// `Variant`).
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgpdtVariant {
    Sgpdt = 0,
    DtEm = 1,
    DtNm = 2,
}

impl From<SgpdtVariant> for Variant {
    fn from(v: SgpdtVariant) -> Variant {
        match v {
            SgpdtVariant::Sgpdt => Variant::Sgpdt,
            SgpdtVariant::DtEm => Variant::DtEm,
            SgpdtVariant::DtNm => Variant::DtNm,
        }
    }
}

/// Flat mirror of the core crate's `RunConfig`. Obtain defaults with
/// `sgpdt_config_default` and override fields as needed.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SgpdtConfig {
    pub variant: SgpdtVariant,
    pub pop_size: usize,
    pub n_ext: usize,
    pub n_int: usize,
    pub init_max_depth: usize,
    pub mutation_max_depth: usize,
    pub leaf_bias: f64,
    pub tournament_k: usize,
    pub rolling_window: usize,
    pub elite_size: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction_of_train: f64,
}

impl From<&SgpdtConfig> for RunConfig {
    fn from(c: &SgpdtConfig) -> RunConfig {
        RunConfig {
            variant: c.variant.into(),
            pop_size: c.pop_size,
            n_ext: c.n_ext,
            n_int: c.n_int,
            init_max_depth: c.init_max_depth,
            mutation_max_depth: c.mutation_max_depth,
            leaf_bias: c.leaf_bias,
            tournament_k: c.tournament_k,
            rolling_window: c.rolling_window,
            elite_size: c.elite_size,
            seed: c.seed,
            split: SplitSpec {
                test_fraction: c.test_fraction,
                val_fraction_of_train: c.val_fraction_of_train,
            },
        }
    }
}

/// Opaque handle to a fitted additive model.
pub struct SgpdtModel {
    inner: FinalModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SgpdtStatus {
    match e.exit_code() {
        1 => SgpdtStatus::Config,
        2 => SgpdtStatus::Data,
        _ => SgpdtStatus::Contract,
    }
}

fn fail(e: Error) -> SgpdtStatus {
    let status = status_of(&e);
    set_error(e.to_string());
    status
}

fn invalid(message: &str) -> SgpdtStatus {
    set_error(message.to_string());
    SgpdtStatus::InvalidArgument
}

/// Message of the most recent failure on this thread, or null if none.
/// The pointer is owned by the library and valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn sgpdt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Default hyperparameters (full-scale configuration, seed 0).
#[no_mangle]
pub extern "C" fn sgpdt_config_default() -> SgpdtConfig {
    let d = RunConfig::default();
    SgpdtConfig {
        variant: SgpdtVariant::Sgpdt,
        pop_size: d.pop_size,
        n_ext: d.n_ext,
        n_int: d.n_int,
        init_max_depth: d.init_max_depth,
        mutation_max_depth: d.mutation_max_depth,
        leaf_bias: d.leaf_bias,
        tournament_k: d.tournament_k,
        rolling_window: d.rolling_window,
        elite_size: d.elite_size,
        seed: d.seed,
        test_fraction: d.split.test_fraction,
        val_fraction_of_train: d.split.val_fraction_of_train,
    }
}

/// Fits a model on `rows` x `cols` row-major features with aligned
/// targets. The data is split internally (test/validation fractions come
/// from the config); on success `*out_model` owns the fitted model and, if
/// `out_test_rmse` is non-null, it receives the held-out RMSE.
///
/// # Safety
/// `features` must point to `rows * cols` doubles, `targets` to `rows`
/// doubles, and `out_model` to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_fit(
    features: *const f64,
    targets: *const f64,
    rows: usize,
    cols: usize,
    config: *const SgpdtConfig,
    out_model: *mut *mut SgpdtModel,
    out_test_rmse: *mut f64,
) -> SgpdtStatus {
    if features.is_null() || targets.is_null() || config.is_null() || out_model.is_null() {
        return invalid("sgpdt_fit: null pointer argument");
    }
    if rows == 0 || cols == 0 {
        return invalid("sgpdt_fit: rows and cols must be positive");
    }
    let feature_rows = slice::from_raw_parts(features, rows * cols);
    let target_slice = slice::from_raw_parts(targets, rows);

    let row_vecs: Vec<Vec<f64>> = feature_rows.chunks(cols).map(|c| c.to_vec()).collect();
    let matrix = match CaseMatrix::from_rows(&row_vecs) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let data = Dataset {
        name: "ffi".to_string(),
        features: matrix,
        targets: target_slice.to_vec(),
        feature_names: (0..cols).map(|j| format!("x{j}")).collect(),
        target_name: "y".to_string(),
    };
    let cfg = RunConfig::from(&*config);
    match run_trial(&data, &cfg) {
        Ok(out) => {
            if !out_test_rmse.is_null() {
                *out_test_rmse = out.report.test_rmse;
            }
            *out_model = Box::into_raw(Box::new(SgpdtModel { inner: out.model }));
            SgpdtStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Parses a model from its JSON serialization.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_model` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_model_parse_json(
    json: *const c_char,
    out_model: *mut *mut SgpdtModel,
) -> SgpdtStatus {
    if json.is_null() || out_model.is_null() {
        return invalid("sgpdt_model_parse_json: null pointer argument");
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(_) => return invalid("sgpdt_model_parse_json: JSON is not valid UTF-8"),
    };
    match FinalModel::from_json(text) {
        Ok(model) => {
            *out_model = Box::into_raw(Box::new(SgpdtModel { inner: model }));
            SgpdtStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Serializes a model to JSON. The returned string is freed with
/// `sgpdt_string_free`.
///
/// # Safety
/// `model` must be a live handle and `out_json` a writable slot.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_model_to_json(
    model: *const SgpdtModel,
    out_json: *mut *mut c_char,
) -> SgpdtStatus {
    if model.is_null() || out_json.is_null() {
        return invalid("sgpdt_model_to_json: null pointer argument");
    }
    let json = (*model).inner.to_json();
    match CString::new(json) {
        Ok(c) => {
            *out_json = c.into_raw();
            SgpdtStatus::Ok
        }
        Err(_) => invalid("sgpdt_model_to_json: serialization contains NUL"),
    }
}

/// Total node count over all terms of the model, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_model_size(model: *const SgpdtModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (*model).inner.size()
}

/// Predicts on `rows` x `cols` row-major features, writing `rows` values
/// to `out_predictions`.
///
/// # Safety
/// `features` must point to `rows * cols` doubles and `out_predictions`
/// to `rows` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_model_predict(
    model: *const SgpdtModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    out_predictions: *mut f64,
) -> SgpdtStatus {
    if model.is_null() || features.is_null() || out_predictions.is_null() {
        return invalid("sgpdt_model_predict: null pointer argument");
    }
    if rows == 0 || cols == 0 {
        return invalid("sgpdt_model_predict: rows and cols must be positive");
    }
    let flat = slice::from_raw_parts(features, rows * cols);
    let row_vecs: Vec<Vec<f64>> = flat.chunks(cols).map(|c| c.to_vec()).collect();
    let matrix = match CaseMatrix::from_rows(&row_vecs) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let counter = EvalCounter::new();
    match (*model).inner.predict(&matrix, &counter) {
        Ok(preds) => {
            let out = slice::from_raw_parts_mut(out_predictions, rows);
            out.copy_from_slice(&preds);
            SgpdtStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Frees a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer previously returned by this library
/// and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_model_free(model: *mut SgpdtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library and
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgpdt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
