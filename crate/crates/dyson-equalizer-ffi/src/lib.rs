//! C ABI for the dyson-equalizer library.
//!
//! Conventions:
//! - Opaque handles (`DeqMatrix`, `DeqEqualizeResult`) own their data and are
//!   released with the matching `*_free` function.
//! - Every fallible call returns a [`DeqStatus`]; outputs are written through
//!   out-pointers only on `Ok`.
//! - On failure a thread-local message is set; fetch it with
//!   [`deq_last_error_message`] and release it with [`deq_string_free`].
//! - The header `include/dyson_equalizer.h` is regenerated by the build
//!   script via cbindgen.

use dyson_equalizer::denoise::denoise_equalized;
use dyson_equalizer::equalizer::{equalize, EqualizeResult, EtaPolicy};
use dyson_equalizer::error::Error;
use dyson_equalizer::linalg::DenseMatrix;
use dyson_equalizer::spectrum::estimate_rank;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeqStatus {
    Ok = 0,
    InvalidInput = 1,
    ZeroRowOrColumn = 2,
    DegenerateMatrix = 3,
    NoConvergence = 4,
    TooLarge = 5,
    ShapeMismatch = 6,
    RankOutOfRange = 7,
    EmptyInput = 8,
    InfeasibleSupport = 9,
    ParseError = 10,
    IoError = 11,
    NullPointer = 12,
    Panic = 13,
}

/// How the imaginary shift is chosen in [`deq_equalize`] and
/// [`deq_denoise`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeqEtaMode {
    /// `value` is a quantile of the singular values, strictly inside (0, 1).
    Quantile = 0,
    /// `value` is the shift itself, strictly positive.
    Fixed = 1,
}

/// Opaque dense row-major matrix handle.
pub struct DeqMatrix(DenseMatrix);

/// Opaque result of [`deq_equalize`].
pub struct DeqEqualizeResult(EqualizeResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DeqStatus {
    match e {
        Error::InvalidInput(_) => DeqStatus::InvalidInput,
        Error::ZeroRowOrColumn { .. } => DeqStatus::ZeroRowOrColumn,
        Error::DegenerateMatrix(_) => DeqStatus::DegenerateMatrix,
        Error::NoConvergence { .. } => DeqStatus::NoConvergence,
        Error::TooLarge { .. } => DeqStatus::TooLarge,
        Error::ShapeMismatch { .. } => DeqStatus::ShapeMismatch,
        Error::RankOutOfRange { .. } => DeqStatus::RankOutOfRange,
        Error::EmptyInput => DeqStatus::EmptyInput,
        Error::InfeasibleSupport { .. } => DeqStatus::InfeasibleSupport,
        Error::Parse { .. } => DeqStatus::ParseError,
        Error::Io(_) => DeqStatus::IoError,
    }
}

fn fail(e: &Error) -> DeqStatus {
    set_error(&e.to_string());
    status_of(e)
}

/// Runs a closure, converting panics into `DeqStatus::Panic`.
fn guarded(f: impl FnOnce() -> DeqStatus) -> DeqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            DeqStatus::Panic
        }
    }
}

fn eta_policy(mode: DeqEtaMode, value: f64) -> Result<EtaPolicy, Error> {
    match mode {
        DeqEtaMode::Quantile => EtaPolicy::quantile(value),
        DeqEtaMode::Fixed => EtaPolicy::fixed(value),
    }
}

/// Crate version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn deq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the last error message on this thread (caller frees with
/// [`deq_string_free`]), or null if none was recorded.
#[no_mangle]
pub extern "C" fn deq_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must have been returned by [`deq_last_error_message`] and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn deq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a matrix from `rows * cols` row-major values (copied).
///
/// # Safety
/// `values` must point to at least `rows * cols` readable doubles and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deq_matrix_new(
    rows: usize,
    cols: usize,
    values: *const f64,
    out: *mut *mut DeqMatrix,
) -> DeqStatus {
    if values.is_null() || out.is_null() {
        set_error("null pointer argument");
        return DeqStatus::NullPointer;
    }
    if rows == 0 || cols == 0 {
        set_error("matrix dimensions must be at least 1x1");
        return DeqStatus::InvalidInput;
    }
    let data = std::slice::from_raw_parts(values, rows.saturating_mul(cols)).to_vec();
    guarded(|| match DenseMatrix::new(rows, cols, data) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(DeqMatrix(m)));
            DeqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// # Safety
/// `m` must be a handle from this library, not yet freed (null is a no-op).
#[no_mangle]
pub unsafe extern "C" fn deq_matrix_free(m: *mut DeqMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn deq_matrix_rows(m: *const DeqMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn deq_matrix_cols(m: *const DeqMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the row-major values into `buffer` (`len` must be `rows * cols`).
///
/// # Safety
/// `m` must be valid and `buffer` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn deq_matrix_copy_values(
    m: *const DeqMatrix,
    buffer: *mut f64,
    len: usize,
) -> DeqStatus {
    let Some(m) = m.as_ref() else {
        set_error("null matrix handle");
        return DeqStatus::NullPointer;
    };
    if buffer.is_null() {
        set_error("null buffer");
        return DeqStatus::NullPointer;
    }
    let values = m.0.values();
    if len != values.len() {
        set_error("buffer length does not match rows * cols");
        return DeqStatus::ShapeMismatch;
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), buffer, len);
    DeqStatus::Ok
}

/// Runs the equalization pipeline on `y`.
///
/// # Safety
/// `y` must be a valid matrix handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deq_equalize(
    y: *const DeqMatrix,
    eta_mode: DeqEtaMode,
    eta_value: f64,
    out: *mut *mut DeqEqualizeResult,
) -> DeqStatus {
    let Some(y) = y.as_ref() else {
        set_error("null matrix handle");
        return DeqStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output pointer");
        return DeqStatus::NullPointer;
    }
    guarded(|| {
        let policy = match eta_policy(eta_mode, eta_value) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        match equalize(&y.0, policy) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(DeqEqualizeResult(r)));
                DeqStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `r` must be a handle from [`deq_equalize`] (null is a no-op).
#[no_mangle]
pub unsafe extern "C" fn deq_equalize_result_free(r: *mut DeqEqualizeResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Shift the pipeline ran at.
///
/// # Safety
/// `r` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn deq_equalize_result_eta(r: *const DeqEqualizeResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.eta)
}

/// Copies the normalized matrix into a fresh handle.
///
/// # Safety
/// `r` must be valid and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn deq_equalize_result_y_hat(
    r: *const DeqEqualizeResult,
    out: *mut *mut DeqMatrix,
) -> DeqStatus {
    let Some(r) = r.as_ref() else {
        set_error("null result handle");
        return DeqStatus::NullPointer;
    };
    if out.is_null() {
        set_error("null output pointer");
        return DeqStatus::NullPointer;
    }
    *out = Box::into_raw(Box::new(DeqMatrix(r.0.y_hat.clone())));
    DeqStatus::Ok
}

unsafe fn copy_factor(v: &[f64], buffer: *mut f64, len: usize) -> DeqStatus {
    if buffer.is_null() {
        set_error("null buffer");
        return DeqStatus::NullPointer;
    }
    if len != v.len() {
        set_error("buffer length does not match factor length");
        return DeqStatus::ShapeMismatch;
    }
    std::ptr::copy_nonoverlapping(v.as_ptr(), buffer, len);
    DeqStatus::Ok
}

/// Copies the row scaling factors (`len` must equal the input row count).
///
/// # Safety
/// `r` must be valid and `buffer` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn deq_equalize_result_row_factors(
    r: *const DeqEqualizeResult,
    buffer: *mut f64,
    len: usize,
) -> DeqStatus {
    let Some(r) = r.as_ref() else {
        set_error("null result handle");
        return DeqStatus::NullPointer;
    };
    copy_factor(&r.0.factors.x, buffer, len)
}

/// Copies the column scaling factors (`len` must equal the input column
/// count).
///
/// # Safety
/// `r` must be valid and `buffer` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn deq_equalize_result_col_factors(
    r: *const DeqEqualizeResult,
    buffer: *mut f64,
    len: usize,
) -> DeqStatus {
    let Some(r) = r.as_ref() else {
        set_error("null result handle");
        return DeqStatus::NullPointer;
    };
    copy_factor(&r.0.factors.y, buffer, len)
}

/// Rank estimate of an (equalized) matrix by the singular-value threshold
/// rule with slack `epsilon`.
///
/// # Safety
/// `y_hat` must be valid; `out_rank` and `out_threshold` must be valid
/// pointers.
#[no_mangle]
pub unsafe extern "C" fn deq_estimate_rank(
    y_hat: *const DeqMatrix,
    epsilon: f64,
    out_rank: *mut usize,
    out_threshold: *mut f64,
) -> DeqStatus {
    let Some(y) = y_hat.as_ref() else {
        set_error("null matrix handle");
        return DeqStatus::NullPointer;
    };
    if out_rank.is_null() || out_threshold.is_null() {
        set_error("null output pointer");
        return DeqStatus::NullPointer;
    }
    guarded(|| match estimate_rank(&y.0, epsilon) {
        Ok(r) => {
            *out_rank = r.r_hat;
            *out_threshold = r.threshold;
            DeqStatus::Ok
        }
        Err(e) => fail(&e),
    })
}

/// Equalize, truncate at `rank` (`rank < 0` selects the threshold-estimated
/// rank), and unscale. Writes the denoised matrix and the rank used.
///
/// # Safety
/// `y` must be valid; `out` and `out_rank_used` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn deq_denoise(
    y: *const DeqMatrix,
    eta_mode: DeqEtaMode,
    eta_value: f64,
    rank: i64,
    out: *mut *mut DeqMatrix,
    out_rank_used: *mut usize,
) -> DeqStatus {
    let Some(y) = y.as_ref() else {
        set_error("null matrix handle");
        return DeqStatus::NullPointer;
    };
    if out.is_null() || out_rank_used.is_null() {
        set_error("null output pointer");
        return DeqStatus::NullPointer;
    }
    guarded(|| {
        let policy = match eta_policy(eta_mode, eta_value) {
            Ok(p) => p,
            Err(e) => return fail(&e),
        };
        let requested = if rank < 0 { None } else { Some(rank as usize) };
        match denoise_equalized(&y.0, policy, requested) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(DeqMatrix(r.x_bar)));
                *out_rank_used = r.r_used;
                DeqStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    unsafe fn matrix_from(rows: usize, cols: usize, values: &[f64]) -> *mut DeqMatrix {
        let mut out: *mut DeqMatrix = std::ptr::null_mut();
        let status = deq_matrix_new(rows, cols, values.as_ptr(), &mut out);
        assert_eq!(status, DeqStatus::Ok);
        out
    }

    #[test]
    fn scalar_equalize_through_the_abi() {
        unsafe {
            let y = matrix_from(1, 1, &[2.0]);
            let mut res: *mut DeqEqualizeResult = std::ptr::null_mut();
            let status = deq_equalize(y, DeqEtaMode::Fixed, 1.0, &mut res);
            assert_eq!(status, DeqStatus::Ok);
            assert!((deq_equalize_result_eta(res) - 1.0).abs() < 1e-15);

            let mut x = [0.0f64];
            assert_eq!(deq_equalize_result_row_factors(res, x.as_mut_ptr(), 1), DeqStatus::Ok);
            assert!((x[0] - 4.0 / 0.8f64.sqrt()).abs() < 1e-12);

            let mut yh: *mut DeqMatrix = std::ptr::null_mut();
            assert_eq!(deq_equalize_result_y_hat(res, &mut yh), DeqStatus::Ok);
            assert_eq!(deq_matrix_rows(yh), 1);
            let mut v = [0.0f64];
            assert_eq!(deq_matrix_copy_values(yh, v.as_mut_ptr(), 1), DeqStatus::Ok);
            assert!((v[0] - 0.447_213_595_499_958).abs() < 1e-12);

            deq_matrix_free(yh);
            deq_equalize_result_free(res);
            deq_matrix_free(y);
        }
    }

    #[test]
    fn zero_column_reports_status_and_message() {
        unsafe {
            let y = matrix_from(2, 3, &[1.0, 0.0, 2.0, 3.0, 0.0, 4.0]);
            let mut res: *mut DeqEqualizeResult = std::ptr::null_mut();
            let status = deq_equalize(y, DeqEtaMode::Quantile, 0.5, &mut res);
            assert_eq!(status, DeqStatus::ZeroRowOrColumn);
            let msg = deq_last_error_message();
            assert!(!msg.is_null());
            let text = std::ffi::CStr::from_ptr(msg).to_string_lossy().into_owned();
            assert!(text.contains("[1]"), "message was {text:?}");
            deq_string_free(msg);
            deq_matrix_free(y);
        }
    }

    #[test]
    fn denoise_full_rank_roundtrip() {
        unsafe {
            let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.5];
            let y = matrix_from(2, 3, &values);
            let mut out: *mut DeqMatrix = std::ptr::null_mut();
            let mut r_used = 0usize;
            let status = deq_denoise(y, DeqEtaMode::Quantile, 0.5, 2, &mut out, &mut r_used);
            assert_eq!(status, DeqStatus::Ok);
            assert_eq!(r_used, 2);
            let mut buf = [0.0f64; 6];
            assert_eq!(deq_matrix_copy_values(out, buf.as_mut_ptr(), 6), DeqStatus::Ok);
            for (a, b) in buf.iter().zip(&values) {
                assert!((a - b).abs() < 1e-10);
            }
            deq_matrix_free(out);
            deq_matrix_free(y);
        }
    }

    #[test]
    fn rank_estimate_through_the_abi() {
        unsafe {
            let mut values = vec![0.0; 2 * 8];
            values[0] = 5.0;
            values[9] = 1.0;
            let y = matrix_from(2, 8, &values);
            let mut rank = 0usize;
            let mut threshold = 0.0f64;
            assert_eq!(
                deq_estimate_rank(y, 0.0, &mut rank, &mut threshold),
                DeqStatus::Ok
            );
            assert_eq!(rank, 1);
            assert!((threshold - (2.0f64.sqrt() + 8.0f64.sqrt())).abs() < 1e-12);
            deq_matrix_free(y);
        }
    }

    #[test]
    fn null_pointers_are_rejected() {
        unsafe {
            let mut out: *mut DeqMatrix = std::ptr::null_mut();
            assert_eq!(
                deq_matrix_new(1, 1, std::ptr::null(), &mut out),
                DeqStatus::NullPointer
            );
            let mut res: *mut DeqEqualizeResult = std::ptr::null_mut();
            assert_eq!(
                deq_equalize(std::ptr::null(), DeqEtaMode::Fixed, 1.0, &mut res),
                DeqStatus::NullPointer
            );
        }
    }

    #[test]
    fn invalid_matrix_is_rejected() {
        unsafe {
            let mut out: *mut DeqMatrix = std::ptr::null_mut();
            let values = [1.0, f64::NAN];
            assert_eq!(
                deq_matrix_new(1, 2, values.as_ptr(), &mut out),
                DeqStatus::InvalidInput
            );
            assert_eq!(
                deq_matrix_new(0, 2, values.as_ptr(), &mut out),
                DeqStatus::InvalidInput
            );
        }
    }

    #[test]
    fn generated_header_is_current() {
        let header = include_str!("../include/dyson_equalizer.h");
        for symbol in [
            "deq_matrix_new",
            "deq_equalize",
            "deq_estimate_rank",
            "deq_denoise",
            "DeqStatus",
            "DeqEtaMode",
        ] {
            assert!(header.contains(symbol), "header is missing {symbol}");
        }
    }
}
