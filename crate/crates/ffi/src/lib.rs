//! C ABI for the tnqe image-to-circuit compiler.
//!
//! Objects are opaque handles created by `tnqe_*_new`/`tnqe_encode`/... and
//! released with the matching `tnqe_*_free`. Every fallible call returns a
//! [`TnqeStatus`]; on failure a message is available from
//! [`tnqe_last_error`] until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tnqe::circuit::{simulate_with_limit, Fusion, StateVector};
use tnqe::cli::{encode_image, JobConfig};
use tnqe::encoders::{decode, Encoding, Method};
use tnqe::tensor::Image;
use tnqe::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnqeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Structural = 3,
    Resource = 4,
    Numerical = 5,
    Io = 6,
    Json = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnqeMethod {
    Amplitude = 0,
    Full = 1,
    Core = 2,
    Unitary = 3,
}

fn method_from(code: i32) -> Result<Method, Error> {
    Ok(match code {
        c if c == TnqeMethod::Amplitude as i32 => Method::Amplitude,
        c if c == TnqeMethod::Full as i32 => Method::Full,
        c if c == TnqeMethod::Core as i32 => Method::Core,
        c if c == TnqeMethod::Unitary as i32 => Method::Unitary,
        other => return Err(Error::InvalidInput(format!("unknown method code {other}"))),
    })
}

/// Encoding options. `layers` is read only by the unitary method; `epochs`
/// of 0 keeps the default training length.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TnqeOptions {
    /// One of the `TnqeMethod` values.
    pub method: i32,
    pub rank: usize,
    pub layers: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Nonzero refines full/core cores by gradient descent.
    pub gradient_fit: i32,
}

/// Resource summary of an encoding circuit (fused single-qubit convention).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TnqeResources {
    pub qubits: usize,
    pub depth: usize,
    pub fused_depth: usize,
    pub single_qubit: usize,
    pub cnot: usize,
    pub total: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TnqeQuality {
    pub mse: f64,
    pub bce: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Square grayscale image.
pub struct TnqeImage(Image);
/// Circuit plus decoding layout.
pub struct TnqeEncoding(Encoding);
/// Simulated state vector.
pub struct TnqeState(StateVector);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TnqeStatus {
    match e {
        Error::InvalidInput(_) => TnqeStatus::InvalidInput,
        Error::Structural(_) => TnqeStatus::Structural,
        Error::Resource(_) => TnqeStatus::Resource,
        Error::Numerical(_) => TnqeStatus::Numerical,
        Error::Io { .. } => TnqeStatus::Io,
        Error::Json { .. } => TnqeStatus::Json,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TnqeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TnqeStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TnqeStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            TnqeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next tnqe call on the same thread.
#[no_mangle]
pub extern "C" fn tnqe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tnqe_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(c) => c,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Default options for `method`: rank 4, 4 layers, default epochs, seed 0.
#[no_mangle]
pub extern "C" fn tnqe_options_default(method: i32) -> TnqeOptions {
    TnqeOptions { method, rank: 4, layers: 4, epochs: 0, seed: 0, gradient_fit: 0 }
}

/// Copies `size * size` row-major pixels into a new image.
///
/// # Safety
/// `pixels` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_image_new(size: usize, pixels: *const f64, len: usize, out: *mut *mut TnqeImage) -> TnqeStatus {
    guard(|| {
        if pixels.is_null() {
            return Err(Failure::Null("pixels"));
        }
        let data = std::slice::from_raw_parts(pixels, len).to_vec();
        write_out(out, TnqeImage(Image::new(size, data)?))
    })
}

/// # Safety
/// `img` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tnqe_image_free(img: *mut TnqeImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Side length of the image, or 0 for NULL.
///
/// # Safety
/// `img` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnqe_image_size(img: *const TnqeImage) -> usize {
    img.as_ref().map_or(0, |i| i.0.size())
}

/// Copies the pixels into `out`, which must hold `size * size` doubles.
///
/// # Safety
/// `img` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tnqe_image_pixels(img: *const TnqeImage, out: *mut f64, len: usize) -> TnqeStatus {
    guard(|| {
        let img = deref(img, "img")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let px = img.0.pixels();
        if len != px.len() {
            return Err(Error::Structural(format!("buffer holds {len} values, image has {}", px.len())).into());
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(px);
        Ok(())
    })
}

/// Compiles `img` into an encoding circuit.
///
/// # Safety
/// `img` and `opts` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_encode(img: *const TnqeImage, opts: *const TnqeOptions, out: *mut *mut TnqeEncoding) -> TnqeStatus {
    guard(|| {
        let img = deref(img, "img")?;
        let o = deref(opts, "opts")?;
        let method = method_from(o.method)?;
        let mut job = JobConfig::new(method);
        job.rank = o.rank;
        if method == Method::Unitary {
            job.layers = Some(o.layers);
        }
        if o.epochs > 0 {
            job.epochs = Some(o.epochs);
        }
        job.seed = o.seed;
        if o.gradient_fit != 0 {
            job.fit = tnqe::cli::FitMode::Gradient;
        }
        let enc = encode_image(&img.0, &job)?;
        write_out(out, TnqeEncoding(enc.encoding))
    })
}

/// # Safety
/// `enc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnqe_encoding_free(enc: *mut TnqeEncoding) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// # Safety
/// `enc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_encoding_resources(enc: *const TnqeEncoding, out: *mut TnqeResources) -> TnqeStatus {
    guard(|| {
        let c = &deref(enc, "enc")?.0.circuit;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let fused = c.counts(Fusion::Fused);
        *out = TnqeResources {
            qubits: c.n_qubits(),
            depth: c.depth(),
            fused_depth: c.fused_depth(),
            single_qubit: fused.single_qubit,
            cnot: fused.cnot,
            total: fused.total,
        };
        Ok(())
    })
}

fn json_string<T: serde::Serialize>(v: &T) -> Result<*mut c_char, Failure> {
    let s = serde_json::to_string(v).map_err(|e| Error::Json { path: "<memory>".into(), source: e })?;
    Ok(CString::new(s).map_err(|_| Error::Numerical("JSON contained NUL".into()))?.into_raw())
}

/// Circuit as JSON. Release with [`tnqe_string_free`].
///
/// # Safety
/// `enc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_encoding_circuit_json(enc: *const TnqeEncoding, out: *mut *mut c_char) -> TnqeStatus {
    guard(|| {
        let enc = deref(enc, "enc")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = json_string(&enc.0.circuit)?;
        Ok(())
    })
}

/// Decoding layout as JSON. Release with [`tnqe_string_free`].
///
/// # Safety
/// `enc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_encoding_layout_json(enc: *const TnqeEncoding, out: *mut *mut c_char) -> TnqeStatus {
    guard(|| {
        let enc = deref(enc, "enc")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = json_string(&enc.0.layout)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tnqe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates the encoding circuit from |0…0⟩, refusing more than
/// `qubit_limit` qubits.
///
/// # Safety
/// `enc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_simulate(enc: *const TnqeEncoding, qubit_limit: usize, out: *mut *mut TnqeState) -> TnqeStatus {
    guard(|| {
        let enc = deref(enc, "enc")?;
        write_out(out, TnqeState(simulate_with_limit(&enc.0.circuit, qubit_limit)?))
    })
}

/// # Safety
/// `state` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnqe_state_free(state: *mut TnqeState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Number of amplitudes, or 0 for NULL.
///
/// # Safety
/// `state` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnqe_state_len(state: *const TnqeState) -> usize {
    state.as_ref().map_or(0, |s| s.0.amplitudes().len())
}

/// Copies amplitudes as interleaved (re, im) pairs; `len` counts doubles.
///
/// # Safety
/// `state` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tnqe_state_amplitudes(state: *const TnqeState, out: *mut f64, len: usize) -> TnqeStatus {
    guard(|| {
        let amps = deref(state, "state")?.0.amplitudes();
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len != 2 * amps.len() {
            return Err(Error::Structural(format!("buffer holds {len} values, state needs {}", 2 * amps.len())).into());
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (pair, z) in dst.chunks_mut(2).zip(amps) {
            pair[0] = z.re;
            pair[1] = z.im;
        }
        Ok(())
    })
}

/// Turns a simulated state back into an image using the encoding layout.
///
/// # Safety
/// `enc` and `state` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_decode(enc: *const TnqeEncoding, state: *const TnqeState, out: *mut *mut TnqeImage) -> TnqeStatus {
    guard(|| {
        let enc = deref(enc, "enc")?;
        let state = deref(state, "state")?;
        write_out(out, TnqeImage(decode(&state.0, &enc.0.layout)?))
    })
}

/// MSE, BCE, PSNR and SSIM of `test` against `reference`.
///
/// # Safety
/// Both images must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnqe_metrics(reference: *const TnqeImage, test: *const TnqeImage, out: *mut TnqeQuality) -> TnqeStatus {
    guard(|| {
        let r = deref(reference, "reference")?;
        let t = deref(test, "test")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let q = tnqe::metrics::evaluate(&r.0, &t.0)?;
        *out = TnqeQuality { mse: q.mse, bce: q.bce, psnr: q.psnr, ssim: q.ssim };
        Ok(())
    })
}
