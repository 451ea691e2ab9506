//! C ABI over `qopt`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `qopt_*_new`/`qopt_*_load` style constructor and released by the matching
//! `qopt_*_free`. Functions return a [`QoptStatus`]; on failure the message is
//! available from [`qopt_last_error`] on the same thread.

use qopt::codec::{encode_jpeg, QuantTableSet};
use qopt::config::RunConfig;
use qopt::image::{load_image, ImagePlanes};
use qopt::train::{measure_candidate, train, Candidate};
use qopt::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Decode = 4,
    Numerical = 5,
    NotFound = 6,
    Panic = 7,
}

/// A decoded image.
pub struct QoptImage(ImagePlanes);

/// A quantization table set with its channel assignment.
pub struct QoptTables(QuantTableSet);

/// Run settings, starting from the defaults.
pub struct QoptConfig(RunConfig);

/// The binned candidates of a finished run.
pub struct QoptRun {
    candidates: Vec<Candidate>,
    bins: Vec<usize>,
}

/// An owned byte buffer, e.g. an encoded JPEG.
pub struct QoptBytes(Vec<u8>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> QoptStatus {
    match err {
        Error::Io(_) => QoptStatus::Io,
        Error::Decode(_) | Error::Image(_) => QoptStatus::Decode,
        Error::Numerical(_) => QoptStatus::Numerical,
        Error::Selection(_) => QoptStatus::NotFound,
        _ => QoptStatus::InvalidArgument,
    }
}

struct Fail(QoptStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QoptStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(QoptStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QoptStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QoptStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next `qopt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn qopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Wraps `width * height * 3` interleaved RGB samples.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_image_from_rgb8(
    width: usize,
    height: usize,
    data: *const u8,
    len: usize,
    out: *mut *mut QoptImage,
) -> QoptStatus {
    guard(|| {
        let data = bytes(data, len, "data")?;
        if Some(len) != width.checked_mul(height).and_then(|n| n.checked_mul(3)) {
            return Err(invalid(format!("expected {width}x{height}x3 samples, got {len}")));
        }
        put(out, QoptImage(ImagePlanes::from_rgb8(width, height, data)?))
    })
}

/// Wraps `width * height` gray samples.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_image_from_gray8(
    width: usize,
    height: usize,
    data: *const u8,
    len: usize,
    out: *mut *mut QoptImage,
) -> QoptStatus {
    guard(|| {
        let data = bytes(data, len, "data")?;
        if Some(len) != width.checked_mul(height) {
            return Err(invalid(format!("expected {width}x{height} samples, got {len}")));
        }
        put(out, QoptImage(ImagePlanes::from_gray8(width, height, data)?))
    })
}

/// Loads a PNG, BMP or raw planar file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_image_load(path: *const c_char, out: *mut *mut QoptImage) -> QoptStatus {
    guard(|| {
        let path = text(path, "path")?;
        put(out, QoptImage(load_image(path)?))
    })
}

/// Writes width, height and channel count; any output may be null.
///
/// # Safety
/// `image` must come from a `qopt_image_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn qopt_image_dims(
    image: *const QoptImage,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> QoptStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        for (p, v) in [(width, img.width()), (height, img.height()), (channels, img.channels())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `image` must be null or come from a `qopt_image_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn qopt_image_free(image: *mut QoptImage) {
    release(image);
}

/// The standard tables scaled to `quality` (1..=100) for a 1 or 3 channel image.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_standard(quality: u8, channels: usize, out: *mut *mut QoptTables) -> QoptStatus {
    guard(|| {
        if !(1..=100).contains(&quality) {
            return Err(invalid(format!("quality {quality} outside 1..=100")));
        }
        put(out, QoptTables(QuantTableSet::standard(quality, channels, channels.min(2))?))
    })
}

/// Parses a table set in the JSON form written by the optimizer.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_from_json(json: *const c_char, out: *mut *mut QoptTables) -> QoptStatus {
    guard(|| {
        let set = QuantTableSet::from_json(text(json, "json")?)?;
        let set = if set.quantized_export().is_some() { set } else { set.export() };
        put(out, QoptTables(set))
    })
}

/// Serializes the table set to JSON.
///
/// # Safety
/// `tables` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_to_json(tables: *const QoptTables, out: *mut *mut QoptBytes) -> QoptStatus {
    guard(|| {
        let json = get(tables, "tables")?.0.to_json()?;
        put(out, QoptBytes(json.into_bytes()))
    })
}

/// Number of distinct tables in the set.
///
/// # Safety
/// `tables` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_count(tables: *const QoptTables, count: *mut usize) -> QoptStatus {
    guard(|| {
        let n = get(tables, "tables")?.0.table_count();
        *get_mut(count, "count")? = n;
        Ok(())
    })
}

/// Copies the integer table used for `channel` into `out`, natural order.
///
/// # Safety
/// `tables` must be a live handle and `out` must hold 64 values.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_for_channel(tables: *const QoptTables, channel: usize, out: *mut u16) -> QoptStatus {
    guard(|| {
        let table = get(tables, "tables")?.0.exported_for_channel(channel)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 64).copy_from_slice(table);
        Ok(())
    })
}

/// # Safety
/// `tables` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qopt_tables_free(tables: *mut QoptTables) {
    release(tables);
}

/// Default run settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_config_new(out: *mut *mut QoptConfig) -> QoptStatus {
    guard(|| put(out, QoptConfig(RunConfig::default())))
}

/// Sets one `key = value` entry, using the configuration file keys.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qopt_config_set(config: *mut QoptConfig, key: *const c_char, value: *const c_char) -> QoptStatus {
    guard(|| {
        let cfg = get_mut(config, "config")?;
        let (key, value) = (text(key, "key")?, text(value, "value")?);
        let mut next = cfg.0.clone();
        next.set(key, value)?;
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qopt_config_free(config: *mut QoptConfig) {
    release(config);
}

/// Encodes the image as a baseline JPEG with the given tables.
///
/// # Safety
/// `image` and `tables` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_encode(image: *const QoptImage, tables: *const QoptTables, out: *mut *mut QoptBytes) -> QoptStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        let set = &get(tables, "tables")?.0;
        let file = encode_jpeg(&img.to_codec_space(), set)?;
        put(out, QoptBytes(file.bytes))
    })
}

/// MS-SSIM against the image and entropy-coded bits of encoding it with
/// `tables`, under the settings of `config` (null for defaults).
///
/// # Safety
/// `image` and `tables` must be live handles; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn qopt_measure(
    image: *const QoptImage,
    tables: *const QoptTables,
    config: *const QoptConfig,
    ms_ssim: *mut f64,
    bits: *mut u64,
) -> QoptStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        let set = &get(tables, "tables")?.0;
        let params = config.as_ref().map_or_else(|| RunConfig::default().ms_ssim, |c| c.0.ms_ssim.clone());
        let c = measure_candidate(img, set, &params)?;
        if let Some(p) = ms_ssim.as_mut() {
            *p = c.ms_ssim;
        }
        if let Some(p) = bits.as_mut() {
            *p = c.estimated_bits;
        }
        Ok(())
    })
}

/// Trains tables for the image and keeps the best candidate per bin.
///
/// # Safety
/// `image` must be a live handle, `config` null or a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_optimize(image: *const QoptImage, config: *const QoptConfig, out: *mut *mut QoptRun) -> QoptStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        let cfg = config.as_ref().map_or_else(RunConfig::default, |c| c.0.clone());
        cfg.validate()?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let run = train(img, &cfg)?;
        let (bins, candidates) = run.record.bins.candidates().map(|(i, c)| (i, c.clone())).unzip();
        put(out, QoptRun { candidates, bins })
    })
}

/// Number of populated bins.
///
/// # Safety
/// `run` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_run_candidate_count(run: *const QoptRun, count: *mut usize) -> QoptStatus {
    guard(|| {
        let n = get(run, "run")?.candidates.len();
        *get_mut(count, "count")? = n;
        Ok(())
    })
}

/// Candidate `index` in bin order: its bin, MS-SSIM, JPEG size and tables.
/// Scalar outputs may be null; `tables` receives a new handle when non-null.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qopt_run_candidate(
    run: *const QoptRun,
    index: usize,
    bin: *mut usize,
    ms_ssim: *mut f64,
    size_bytes: *mut usize,
    tables: *mut *mut QoptTables,
) -> QoptStatus {
    guard(|| {
        let run = get(run, "run")?;
        let c = run
            .candidates
            .get(index)
            .ok_or_else(|| Fail(QoptStatus::NotFound, format!("no candidate {index}")))?;
        if let Some(p) = bin.as_mut() {
            *p = run.bins[index];
        }
        if let Some(p) = ms_ssim.as_mut() {
            *p = c.ms_ssim;
        }
        if let Some(p) = size_bytes.as_mut() {
            *p = c.size_bytes;
        }
        if !tables.is_null() {
            put(tables, QoptTables(c.tables.clone()))?;
        }
        Ok(())
    })
}

/// Smallest candidate with MS-SSIM at or above `threshold`.
///
/// # Safety
/// `run` must be a live handle and `index` writable.
#[no_mangle]
pub unsafe extern "C" fn qopt_run_select(run: *const QoptRun, threshold: f64, index: *mut usize) -> QoptStatus {
    guard(|| {
        let run = get(run, "run")?;
        if !(threshold >= 0.0) {
            return Err(invalid(format!("threshold {threshold} must be a non-negative number")));
        }
        let best = run
            .candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.ms_ssim >= threshold)
            .min_by_key(|(_, c)| c.size_bytes)
            .ok_or_else(|| Fail(QoptStatus::NotFound, format!("no candidate reaches MS-SSIM {threshold}")))?;
        *get_mut(index, "index")? = best.0;
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qopt_run_free(run: *mut QoptRun) {
    release(run);
}

/// Pointer to the buffer contents and their length.
///
/// # Safety
/// `buf` must be a live handle; the data pointer is valid until it is freed.
#[no_mangle]
pub unsafe extern "C" fn qopt_bytes_data(buf: *const QoptBytes, data: *mut *const u8, len: *mut usize) -> QoptStatus {
    guard(|| {
        let b = &get(buf, "buffer")?.0;
        *get_mut(data, "data")? = b.as_ptr();
        *get_mut(len, "len")? = b.len();
        Ok(())
    })
}

/// # Safety
/// `buf` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qopt_bytes_free(buf: *mut QoptBytes) {
    release(buf);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handles_are_reported() {
        let mut n = 0usize;
        let s = unsafe { qopt_tables_count(ptr::null(), &mut n) };
        assert_eq!(s, QoptStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(qopt_last_error()) };
        assert!(msg.to_str().unwrap().contains("tables"));
    }

    #[test]
    fn success_clears_error() {
        let _ = unsafe { qopt_tables_count(ptr::null(), ptr::null_mut()) };
        let mut t = ptr::null_mut();
        assert_eq!(unsafe { qopt_tables_standard(50, 3, &mut t) }, QoptStatus::Ok);
        assert!(qopt_last_error().is_null());
        unsafe { qopt_tables_free(t) };
    }

    #[test]
    fn error_mapping() {
        assert_eq!(status_of(&Error::Numerical("x".into())), QoptStatus::Numerical);
        assert_eq!(status_of(&Error::Config("x".into())), QoptStatus::InvalidArgument);
        assert_eq!(status_of(&Error::Decode("x".into())), QoptStatus::Decode);
    }
}
