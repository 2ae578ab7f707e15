//! C ABI over qcnn-core: opaque model handles, integer status codes and a
//! per-thread last-error message. The header is generated into
//! `include/qcnn.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use qcnn_core::error::Error;
use qcnn_core::mitigate::{apply_policy, SoftDropoutPolicy};
use qcnn_core::model::{self, ModelMetadata, ParamVector, QcnnModel};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QcnnStatus {
    Ok = 0,
    InvalidArgument = 2,
    NumericError = 3,
    IoError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: Vec<u8> = msg.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &Error) -> QcnnStatus {
    match err.exit_code() {
        3 => QcnnStatus::NumericError,
        4 => QcnnStatus::IoError,
        _ => QcnnStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> QcnnStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Opaque handle to a model plus its parameter vector.
pub struct QcnnModelHandle {
    model: QcnnModel,
    params: ParamVector,
    metadata: ModelMetadata,
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, QcnnStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(QcnnStatus::InvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        QcnnStatus::InvalidArgument
    })
}

/// Message for the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn qcnn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qcnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model file. On success writes a handle the caller must release
/// with `qcnn_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_load(
    path: *const c_char,
    out: *mut *mut QcnnModelHandle,
) -> QcnnStatus {
    if out.is_null() {
        set_error("null output pointer");
        return QcnnStatus::InvalidArgument;
    }
    let path = match cstr(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match model::load_model(Path::new(path)) {
        Ok((model, params, metadata)) => {
            *out = Box::into_raw(Box::new(QcnnModelHandle {
                model,
                params,
                metadata,
            }));
            QcnnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Save the handle's model (with its current parameters) to `path`.
///
/// # Safety
/// `handle` must come from `qcnn_model_load` and not have been freed;
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_save(
    handle: *const QcnnModelHandle,
    path: *const c_char,
) -> QcnnStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null handle");
        return QcnnStatus::InvalidArgument;
    };
    let path = match cstr(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match model::save_model(Path::new(path), &h.model, &h.params, &h.metadata) {
        Ok(()) => QcnnStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Release a handle. A null handle is a no-op.
///
/// # Safety
/// `handle` must come from `qcnn_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_free(handle: *mut QcnnModelHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of trainable parameters, or 0 for a null handle.
///
/// # Safety
/// `handle` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_n_params(handle: *const QcnnModelHandle) -> usize {
    handle.as_ref().map_or(0, |h| h.model.n_params)
}

/// Number of qubits (including any ancilla), or 0 for a null handle.
///
/// # Safety
/// `handle` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_n_qubits(handle: *const QcnnModelHandle) -> usize {
    handle.as_ref().map_or(0, |h| h.model.n_qubits)
}

/// Copy the parameter vector into `out` (capacity `len`, must equal
/// `qcnn_model_n_params`).
///
/// # Safety
/// `out` must point to at least `len` f64 slots.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_get_params(
    handle: *const QcnnModelHandle,
    out: *mut f64,
    len: usize,
) -> QcnnStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null handle");
        return QcnnStatus::InvalidArgument;
    };
    if out.is_null() || len != h.params.len() {
        set_error(&format!(
            "parameter buffer must hold exactly {} values",
            h.params.len()
        ));
        return QcnnStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(h.params.0.as_ptr(), out, len);
    QcnnStatus::Ok
}

/// Replace the parameter vector from `values` (length `len`, must equal
/// `qcnn_model_n_params`).
///
/// # Safety
/// `values` must point to at least `len` f64 values.
#[no_mangle]
pub unsafe extern "C" fn qcnn_model_set_params(
    handle: *mut QcnnModelHandle,
    values: *const f64,
    len: usize,
) -> QcnnStatus {
    let Some(h) = handle.as_mut() else {
        set_error("null handle");
        return QcnnStatus::InvalidArgument;
    };
    if values.is_null() || len != h.model.n_params {
        set_error(&format!(
            "parameter buffer must hold exactly {} values",
            h.model.n_params
        ));
        return QcnnStatus::InvalidArgument;
    }
    h.params = ParamVector(std::slice::from_raw_parts(values, len).to_vec());
    QcnnStatus::Ok
}

/// Run the circuit on one feature row and write P(readout = 1) to `out`.
/// Feature count rules follow the model's encoding.
///
/// # Safety
/// `features` must point to `n_features` f64 values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qcnn_forward(
    handle: *const QcnnModelHandle,
    features: *const f64,
    n_features: usize,
    out: *mut f64,
) -> QcnnStatus {
    let Some(h) = handle.as_ref() else {
        set_error("null handle");
        return QcnnStatus::InvalidArgument;
    };
    if features.is_null() || out.is_null() {
        set_error("null buffer argument");
        return QcnnStatus::InvalidArgument;
    }
    let row = std::slice::from_raw_parts(features, n_features);
    let result = h
        .model
        .encode_input(row)
        .and_then(|state| model::forward(&h.model, &h.params, &state));
    match result {
        Ok(p) => {
            *out = p;
            QcnnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Apply a soft-dropout policy, given as JSON (for example
/// `{"round":{"decimals":1}}` or `"identity"`), to the handle's parameters
/// in place.
///
/// # Safety
/// `policy_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn qcnn_apply_policy_json(
    handle: *mut QcnnModelHandle,
    policy_json: *const c_char,
) -> QcnnStatus {
    let Some(h) = handle.as_mut() else {
        set_error("null handle");
        return QcnnStatus::InvalidArgument;
    };
    let text = match cstr(policy_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let policy: SoftDropoutPolicy = match serde_json::from_str(text) {
        Ok(p) => p,
        Err(e) => {
            set_error(&format!("bad policy JSON: {e}"));
            return QcnnStatus::InvalidArgument;
        }
    };
    match apply_policy(&h.params, &policy) {
        Ok(p) => {
            h.params = p;
            QcnnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qcnn_core::model::{build_model, BlockType, Encoding, PoolingKind};
    use std::ffi::CString;

    fn saved_model_path(dir: &Path) -> CString {
        let model = build_model(4, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let params = ParamVector((0..model.n_params).map(|i| 0.1 * i as f64).collect());
        let path = dir.join("m.json");
        model::save_model(&path, &model, &params, &ModelMetadata::default()).unwrap();
        CString::new(path.to_str().unwrap()).unwrap()
    }

    #[test]
    fn load_query_forward_save_round_trip() {
        let dir = std::env::temp_dir().join("qcnn_ffi_test_a");
        std::fs::create_dir_all(&dir).unwrap();
        let cpath = saved_model_path(&dir);

        let mut h: *mut QcnnModelHandle = ptr::null_mut();
        unsafe {
            assert!(qcnn_model_load(cpath.as_ptr(), &mut h) == QcnnStatus::Ok);
            assert_eq!(qcnn_model_n_qubits(h), 4);
            let n = qcnn_model_n_params(h);
            assert!(n > 0);

            let mut buf = vec![0.0f64; n];
            assert!(qcnn_model_get_params(h, buf.as_mut_ptr(), n) == QcnnStatus::Ok);
            assert_eq!(buf[1], 0.1);

            let feats = [0.3f64, 0.7, 1.1, 2.0];
            let mut p = -1.0f64;
            assert!(qcnn_forward(h, feats.as_ptr(), feats.len(), &mut p) == QcnnStatus::Ok);
            assert!((0.0..=1.0).contains(&p));

            let out = dir.join("copy.json");
            let cout = CString::new(out.to_str().unwrap()).unwrap();
            assert!(qcnn_model_save(h, cout.as_ptr()) == QcnnStatus::Ok);
            qcnn_model_free(h);

            let mut h2: *mut QcnnModelHandle = ptr::null_mut();
            assert!(qcnn_model_load(cout.as_ptr(), &mut h2) == QcnnStatus::Ok);
            let mut buf2 = vec![0.0f64; n];
            assert!(qcnn_model_get_params(h2, buf2.as_mut_ptr(), n) == QcnnStatus::Ok);
            assert_eq!(buf, buf2);
            qcnn_model_free(h2);
        }
    }

    #[test]
    fn policy_json_rounds_params_in_place() {
        let dir = std::env::temp_dir().join("qcnn_ffi_test_b");
        std::fs::create_dir_all(&dir).unwrap();
        let cpath = saved_model_path(&dir);
        let mut h: *mut QcnnModelHandle = ptr::null_mut();
        unsafe {
            assert!(qcnn_model_load(cpath.as_ptr(), &mut h) == QcnnStatus::Ok);
            let policy = CString::new(r#"{"round":{"decimals":0}}"#).unwrap();
            assert!(qcnn_apply_policy_json(h, policy.as_ptr()) == QcnnStatus::Ok);
            let n = qcnn_model_n_params(h);
            let mut buf = vec![0.0f64; n];
            qcnn_model_get_params(h, buf.as_mut_ptr(), n);
            assert_eq!(buf[1], 0.0); // 0.1 rounds to 0
            assert_eq!(buf[5], 1.0); // 0.5 rounds half away from zero
            qcnn_model_free(h);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        let missing = CString::new("/no/such/file.json").unwrap();
        let mut h: *mut QcnnModelHandle = ptr::null_mut();
        unsafe {
            assert!(qcnn_model_load(missing.as_ptr(), &mut h) == QcnnStatus::IoError);
            let msg = CStr::from_ptr(qcnn_last_error_message());
            assert!(!msg.to_bytes().is_empty());

            assert!(qcnn_model_save(ptr::null(), missing.as_ptr()) == QcnnStatus::InvalidArgument);
            assert_eq!(qcnn_model_n_params(ptr::null()), 0);
        }
    }
}
