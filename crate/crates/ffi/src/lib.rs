//! C ABI over the `otsm` crate.
//!
//! Configurations are opaque heap handles created by `otsm_config_*` and
//! released with `otsm_config_free`. Every fallible call returns an
//! [`OtsmStatus`]; on failure a message is kept per thread and can be copied
//! out with `otsm_last_error`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use otsm::config::{parse_config_str, RunConfig};
use otsm::framing::{self, build_frame, TimeSignal};
use otsm::harness::{run_bound_sweep, run_point, BoundSettings};
use otsm::transforms::fwht_in_place;
use otsm::{OtsmError, C64};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Unsupported = 4,
    SizeLimit = 5,
    Numeric = 6,
    Io = 7,
    Panic = 8,
}

/// Interleaved complex sample, layout-compatible with `double _Complex`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OtsmComplex {
    pub re: f64,
    pub im: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OtsmBerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub frames: u64,
    pub frame_errors: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OtsmBoundPoint {
    pub snr_db: f64,
    pub abep: f64,
    pub cond_pep: f64,
    pub chiani: f64,
    pub high_snr: f64,
    pub kappa: u32,
}

/// Opaque configuration handle.
pub struct OtsmConfig {
    text: String,
    overrides: Vec<String>,
    parsed: RunConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &OtsmError) -> OtsmStatus {
    match e {
        OtsmError::Config { .. } | OtsmError::Profile(_) | OtsmError::Geometry(_) => OtsmStatus::Config,
        OtsmError::Unsupported(_) => OtsmStatus::Unsupported,
        OtsmError::Size(_) => OtsmStatus::SizeLimit,
        OtsmError::Numeric(_) => OtsmStatus::Numeric,
        OtsmError::Io(_) => OtsmStatus::Io,
        OtsmError::InvalidLength { .. } | OtsmError::Dimension { .. } | OtsmError::Index(_) => {
            OtsmStatus::InvalidArgument
        }
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(OtsmError),
}

impl From<OtsmError> for Fail {
    fn from(e: OtsmError) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OtsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OtsmStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            OtsmStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            OtsmStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OtsmStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(cfg: *const OtsmConfig) -> Result<&'a OtsmConfig, Fail> {
    cfg.as_ref().ok_or(Fail::Null("config"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn need_len(what: &str, want: usize, got: usize) -> Result<(), Fail> {
    if want == got {
        Ok(())
    } else {
        Err(Fail::Arg(format!("{what} must hold {want} elements, got {got}")))
    }
}

fn to_c64(v: &[OtsmComplex]) -> Vec<C64> {
    v.iter().map(|z| C64::new(z.re, z.im)).collect()
}

fn write_out(src: &[C64], dst: &mut [OtsmComplex]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = OtsmComplex { re: s.re, im: s.im };
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn otsm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn otsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a TOML configuration. `toml` may be null for all defaults.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn otsm_config_new(toml: *const c_char, out: *mut *mut OtsmConfig) -> OtsmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = ptr::null_mut();
        let text = if toml.is_null() { "" } else { cstr(toml, "toml")? };
        let parsed = parse_config_str(text, &[])?;
        *out = Box::into_raw(Box::new(OtsmConfig {
            text: text.to_string(),
            overrides: Vec::new(),
            parsed,
        }));
        Ok(())
    })
}

/// Applies a `key=value` override. The handle is unchanged on error.
///
/// # Safety
/// `cfg` must come from `otsm_config_new`; `kv` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn otsm_config_set(cfg: *mut OtsmConfig, kv: *const c_char) -> OtsmStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or(Fail::Null("config"))?;
        let kv = cstr(kv, "kv")?;
        let mut overrides = c.overrides.clone();
        overrides.push(kv.to_string());
        c.parsed = parse_config_str(&c.text, &overrides)?;
        c.overrides = overrides;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from `otsm_config_new`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn otsm_config_free(cfg: *mut OtsmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Frame sizes: `nm` grid entries, `data` symbols, `samples` per frame with
/// prefix, `bits` per frame. Any output pointer may be null.
///
/// # Safety
/// `cfg` must come from `otsm_config_new`; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn otsm_config_sizes(
    cfg: *const OtsmConfig,
    nm: *mut usize,
    data: *mut usize,
    samples: *mut usize,
    bits: *mut usize,
) -> OtsmStatus {
    guard(|| {
        let g = handle(cfg)?.parsed.sim.geometry;
        for (p, v) in [
            (nm, g.nm()),
            (data, g.data_symbols()),
            (samples, g.len_cp()),
            (bits, g.bits_per_frame()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Orthonormal Walsh–Hadamard transform in place; `len` must be a power of two.
///
/// # Safety
/// `data` must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn otsm_fwht(data: *mut OtsmComplex, len: usize) -> OtsmStatus {
    guard(|| {
        let d = slice_mut(data, len, "data")?;
        let mut v = to_c64(d);
        fwht_in_place(&mut v)?;
        write_out(&v, d);
        Ok(())
    })
}

/// Maps `data_len` data symbols onto the grid and produces the time frame
/// with cyclic prefix (`out_len` samples).
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn otsm_modulate(
    cfg: *const OtsmConfig,
    data: *const OtsmComplex,
    data_len: usize,
    out: *mut OtsmComplex,
    out_len: usize,
) -> OtsmStatus {
    guard(|| {
        let g = handle(cfg)?.parsed.sim.geometry;
        let d = slice(data, data_len, "data")?;
        need_len("data", g.data_symbols(), d.len())?;
        let o = slice_mut(out, out_len, "out")?;
        need_len("out", g.len_cp(), o.len())?;
        let s = framing::otsm_modulate(&build_frame(&to_c64(d), g)?)?;
        write_out(&s.samples, o);
        Ok(())
    })
}

/// Inverse of [`otsm_modulate`]: `in_len` prefixed samples to the full
/// `out_len = NM` grid, row-major.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn otsm_demodulate(
    cfg: *const OtsmConfig,
    samples: *const OtsmComplex,
    in_len: usize,
    out: *mut OtsmComplex,
    out_len: usize,
) -> OtsmStatus {
    guard(|| {
        let g = handle(cfg)?.parsed.sim.geometry;
        let s = slice(samples, in_len, "samples")?;
        need_len("samples", g.len_cp(), s.len())?;
        let o = slice_mut(out, out_len, "out")?;
        need_len("out", g.nm(), o.len())?;
        let sig = TimeSignal {
            samples: to_c64(s),
            has_cp: true,
        };
        write_out(&framing::otsm_demodulate(&sig, &g)?, o);
        Ok(())
    })
}

/// Monte-Carlo BER at one SNR with the handle's settings.
///
/// # Safety
/// `cfg` must come from `otsm_config_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otsm_run_point(cfg: *const OtsmConfig, snr_db: f64, out: *mut OtsmBerPoint) -> OtsmStatus {
    guard(|| {
        let c = handle(cfg)?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let r = run_point(&c.parsed.sim, snr_db)?;
        *out = OtsmBerPoint {
            snr_db: r.snr_db,
            bits: r.bits,
            bit_errors: r.bit_errors,
            ber: r.ber,
            frames: r.frames,
            frame_errors: r.frame_errors,
        };
        Ok(())
    })
}

/// Analytical bounds at one SNR with the handle's `[bound]` settings.
///
/// # Safety
/// `cfg` must come from `otsm_config_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn otsm_bound_point(cfg: *const OtsmConfig, snr_db: f64, out: *mut OtsmBoundPoint) -> OtsmStatus {
    guard(|| {
        let c = handle(cfg)?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let settings = BoundSettings {
            snr_db_grid: vec![snr_db],
            ..c.parsed.bound.clone()
        };
        let row = run_bound_sweep(&c.parsed.sim, &settings)?[0];
        *out = OtsmBoundPoint {
            snr_db: row.snr_db,
            abep: row.abep,
            cond_pep: row.cond_pep,
            chiani: row.chiani,
            high_snr: row.high_snr,
            kappa: row.kappa as u32,
        };
        Ok(())
    })
}
