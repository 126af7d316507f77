//! Exercises the C API through its raw surface: fit, predict, JSON round
//! trip, error reporting, and ownership rules.

use std::ffi::{CStr, CString};
use std::ptr;

use sgpdt_ffi::*;

fn uball5d_value(x: &[f64]) -> f64 {
    10.0 / (5.0 + x.iter().map(|v| (v - 3.0) * (v - 3.0)).sum::<f64>())
}

/// Deterministic row-major 5-feature dataset.
fn sample_data(rows: usize) -> (Vec<f64>, Vec<f64>) {
    let mut features = Vec::with_capacity(rows * 5);
    let mut targets = Vec::with_capacity(rows);
    for i in 0..rows {
        let row: Vec<f64> = (0..5)
            .map(|j| 0.05 + ((i * 5 + j) % 601) as f64 * 0.01)
            .collect();
        targets.push(uball5d_value(&row));
        features.extend_from_slice(&row);
    }
    (features, targets)
}

fn desk_config(seed: u64) -> SgpdtConfig {
    let mut cfg = sgpdt_config_default();
    cfg.pop_size = 30;
    cfg.n_ext = 3;
    cfg.n_int = 5;
    cfg.seed = seed;
    cfg
}

#[test]
fn fit_predict_and_json_round_trip() {
    let (features, targets) = sample_data(200);
    let cfg = desk_config(42);

    let mut model: *mut SgpdtModel = ptr::null_mut();
    let mut test_rmse = f64::NAN;
    let status = unsafe {
        sgpdt_fit(
            features.as_ptr(),
            targets.as_ptr(),
            200,
            5,
            &cfg,
            &mut model,
            &mut test_rmse,
        )
    };
    assert_eq!(status, SgpdtStatus::Ok);
    assert!(!model.is_null());
    assert!(test_rmse.is_finite() && test_rmse >= 0.0);
    assert!(unsafe { sgpdt_model_size(model) } > 0);

    let mut preds = vec![0.0; 200];
    let status =
        unsafe { sgpdt_model_predict(model, features.as_ptr(), 200, 5, preds.as_mut_ptr()) };
    assert_eq!(status, SgpdtStatus::Ok);
    assert!(preds.iter().all(|p| p.is_finite()));

    // Serialize, reload, and confirm bit-identical predictions.
    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { sgpdt_model_to_json(model, &mut json) },
        SgpdtStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("members"));

    let reloaded_json = CString::new(text).unwrap();
    let mut reloaded: *mut SgpdtModel = ptr::null_mut();
    assert_eq!(
        unsafe { sgpdt_model_parse_json(reloaded_json.as_ptr(), &mut reloaded) },
        SgpdtStatus::Ok
    );
    let mut preds2 = vec![0.0; 200];
    assert_eq!(
        unsafe { sgpdt_model_predict(reloaded, features.as_ptr(), 200, 5, preds2.as_mut_ptr()) },
        SgpdtStatus::Ok
    );
    assert_eq!(preds, preds2);

    unsafe {
        sgpdt_string_free(json);
        sgpdt_model_free(model);
        sgpdt_model_free(reloaded);
    }
}

#[test]
fn fit_is_deterministic_per_seed() {
    let (features, targets) = sample_data(150);
    let cfg = desk_config(7);
    let fit = || {
        let mut model: *mut SgpdtModel = ptr::null_mut();
        let mut rmse = f64::NAN;
        let status = unsafe {
            sgpdt_fit(
                features.as_ptr(),
                targets.as_ptr(),
                150,
                5,
                &cfg,
                &mut model,
                &mut rmse,
            )
        };
        assert_eq!(status, SgpdtStatus::Ok);
        unsafe { sgpdt_model_free(model) };
        rmse
    };
    assert_eq!(fit(), fit());
}

#[test]
fn invalid_config_reports_error() {
    let (features, targets) = sample_data(100);
    let mut cfg = desk_config(1);
    cfg.pop_size = 1;
    let mut model: *mut SgpdtModel = ptr::null_mut();
    let status = unsafe {
        sgpdt_fit(
            features.as_ptr(),
            targets.as_ptr(),
            100,
            5,
            &cfg,
            &mut model,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SgpdtStatus::Config);
    assert!(model.is_null());
    let message = unsafe { CStr::from_ptr(sgpdt_last_error()) }
        .to_str()
        .unwrap();
    assert!(message.contains("pop_size"), "message: {message}");
}

#[test]
fn null_and_malformed_arguments() {
    let mut model: *mut SgpdtModel = ptr::null_mut();
    let status = unsafe { sgpdt_model_parse_json(ptr::null(), &mut model) };
    assert_eq!(status, SgpdtStatus::InvalidArgument);

    let bad = CString::new("not json").unwrap();
    let status = unsafe { sgpdt_model_parse_json(bad.as_ptr(), &mut model) };
    assert_eq!(status, SgpdtStatus::Data);
    assert!(!sgpdt_last_error().is_null());

    assert_eq!(unsafe { sgpdt_model_size(ptr::null()) }, 0);
    unsafe {
        sgpdt_model_free(ptr::null_mut());
        sgpdt_string_free(ptr::null_mut());
    }

    let (features, targets) = sample_data(10);
    let cfg = desk_config(0);
    let status = unsafe {
        sgpdt_fit(
            features.as_ptr(),
            targets.as_ptr(),
            0,
            5,
            &cfg,
            &mut model,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, SgpdtStatus::InvalidArgument);
}

#[test]
fn predict_rejects_feature_count_mismatch() {
    let (features, targets) = sample_data(100);
    let cfg = desk_config(3);
    let mut model: *mut SgpdtModel = ptr::null_mut();
    assert_eq!(
        unsafe {
            sgpdt_fit(
                features.as_ptr(),
                targets.as_ptr(),
                100,
                5,
                &cfg,
                &mut model,
                ptr::null_mut(),
            )
        },
        SgpdtStatus::Ok
    );
    // Too few columns for the variables referenced by the model.
    let narrow = vec![1.0; 100];
    let mut preds = vec![0.0; 100];
    let status =
        unsafe { sgpdt_model_predict(model, narrow.as_ptr(), 100, 1, preds.as_mut_ptr()) };
    assert_eq!(status, SgpdtStatus::Contract);
    unsafe { sgpdt_model_free(model) };
}
