//! C interface to qdynkit.
//!
//! Every function returns a [`QdkStatus`]. On failure the message is kept per
//! thread and can be copied out with [`qdk_last_error`]. Objects are opaque
//! handles created by `*_load`/`*_new` style functions and released with the
//! matching `*_free`; passing NULL to a `*_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use qdynkit::cli::config::{parse_config, parse_str, RunSpec};
use qdynkit::cli::runner::{build_system, initial_state, run_bound, run_propa, run_relax, run_replay, RunContext, RunSummary};
use qdynkit::observe::expect;
use qdynkit::propagators::{cheby_coefficients, ChebyMode, ChebyPropagator};
use qdynkit::stationary::{solve_bound_states, EigenOptions};
use qdynkit::{Error, SystemSpec, WaveFunction};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdkStatus {
    Ok = 0,
    /// invalid configuration or parameter
    Config = 1,
    Shape = 2,
    Numeric = 3,
    /// value outside a tabulated range
    Range = 4,
    Unsupported = 5,
    /// matrix larger than the dimension cap
    Resource = 6,
    Io = 7,
    /// malformed file contents
    Format = 8,
    NullPointer = 9,
    InvalidUtf8 = 10,
    /// output buffer shorter than required
    BufferTooSmall = 11,
    /// index or key not present
    NotFound = 12,
    /// internal panic caught at the boundary
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdkMode {
    Bound = 0,
    Propa = 1,
    Relax = 2,
    Replay = 3,
}

/// Parsed and validated run configuration.
pub struct QdkConfig {
    spec: RunSpec,
}

/// Named scalar results of a run.
pub struct QdkSummary {
    entries: Vec<(String, f64)>,
}

/// Hamiltonian on a grid.
pub struct QdkSystem {
    sys: SystemSpec,
}

/// Wavefunction on the grid of a system.
pub struct QdkWave {
    psi: WaveFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: QdkStatus, msg: impl Into<String>) -> QdkStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> QdkStatus {
    match e {
        Error::Config { .. } => QdkStatus::Config,
        Error::Shape(_) => QdkStatus::Shape,
        Error::Numeric(_) => QdkStatus::Numeric,
        Error::Range { .. } => QdkStatus::Range,
        Error::Unsupported(_) => QdkStatus::Unsupported,
        Error::Resource { .. } => QdkStatus::Resource,
        Error::Io { .. } => QdkStatus::Io,
        Error::Format { .. } => QdkStatus::Format,
    }
}

struct Fail(QdkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QdkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QdkStatus::Ok
        }
        Ok(Err(Fail(s, m))) => fail(s, m),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            fail(QdkStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(QdkStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(QdkStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Copies `s` NUL-terminated into `buf`; `needed` receives the byte count
/// including the terminator.
unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if let Some(n) = needed.as_mut() {
        *n = s.len() + 1;
    }
    if buf.is_null() {
        return if len == 0 { Ok(()) } else { Err(null("buf")) };
    }
    if len < s.len() + 1 {
        return Err(Fail(QdkStatus::BufferTooSmall, format!("{} bytes needed, {len} given", s.len() + 1)));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copies the calling thread's last error message. With `buf` NULL and
/// `len` 0 only `needed` is filled. The message is empty after a success.
///
/// # Safety
/// `buf` must point to `len` writable bytes; `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qdk_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> QdkStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_str(&msg, buf, len, needed) {
        Ok(()) => QdkStatus::Ok,
        Err(Fail(s, _)) => s,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qdk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `config` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qdk_config_load(path: *const c_char, config: *mut *mut QdkConfig) -> QdkStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out(config, "config")?;
        let spec = parse_config(Path::new(path))?;
        *slot = Box::into_raw(Box::new(QdkConfig { spec }));
        Ok(())
    })
}

/// Validates configuration text. Relative file names resolve against
/// `base_dir` (the current directory when NULL); `stem` names outputs.
///
/// # Safety
/// String arguments must be NUL-terminated; `base_dir` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qdk_config_parse(
    text: *const c_char,
    base_dir: *const c_char,
    stem: *const c_char,
    config: *mut *mut QdkConfig,
) -> QdkStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let base = if base_dir.is_null() { PathBuf::from(".") } else { PathBuf::from(str_arg(base_dir, "base_dir")?) };
        let stem = str_arg(stem, "stem")?;
        let slot = out(config, "config")?;
        let spec = parse_str(text, &base, stem)?;
        *slot = Box::into_raw(Box::new(QdkConfig { spec }));
        Ok(())
    })
}

/// Copies the resolved configuration, all defaults filled in, as TOML.
///
/// # Safety
/// `config` must come from `qdk_config_load`/`qdk_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn qdk_config_echo(config: *const QdkConfig, buf: *mut c_char, len: usize, needed: *mut usize) -> QdkStatus {
    guard(|| copy_str(&obj(config, "config")?.spec.echo, buf, len, needed))
}

/// # Safety
/// `config` must be NULL or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn qdk_config_free(config: *mut QdkConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs a pipeline, writing its files below `out_dir`. `summary` receives
/// the run's named results.
///
/// # Safety
/// `config` must be valid, `out_dir` NUL-terminated, `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_run(
    config: *const QdkConfig,
    mode: QdkMode,
    out_dir: *const c_char,
    frames: bool,
    summary: *mut *mut QdkSummary,
) -> QdkStatus {
    guard(|| {
        let spec = &obj(config, "config")?.spec;
        let dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let slot = out(summary, "summary")?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ctx = RunContext { out_dir: dir, frames };
        let res: RunSummary = match mode {
            QdkMode::Bound => run_bound(spec, &ctx)?,
            QdkMode::Propa => run_propa(spec, &ctx)?,
            QdkMode::Relax => run_relax(spec, &ctx)?,
            QdkMode::Replay => run_replay(spec, &ctx)?,
        };
        *slot = Box::into_raw(Box::new(QdkSummary { entries: res.scalars.into_iter().collect() }));
        Ok(())
    })
}

/// Number of named results.
///
/// # Safety
/// `summary` must be valid; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_summary_len(summary: *const QdkSummary, count: *mut usize) -> QdkStatus {
    guard(|| {
        *out(count, "count")? = obj(summary, "summary")?.entries.len();
        Ok(())
    })
}

/// Name of the `index`-th result, in ascending order.
///
/// # Safety
/// `summary` must be valid; `buf` must hold `len` bytes; `needed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qdk_summary_key(
    summary: *const QdkSummary,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> QdkStatus {
    guard(|| {
        let s = obj(summary, "summary")?;
        let (k, _) = s
            .entries
            .get(index)
            .ok_or_else(|| Fail(QdkStatus::NotFound, format!("index {index} outside 0..{}", s.entries.len())))?;
        copy_str(k, buf, len, needed)
    })
}

/// Value of the result called `key`, e.g. `energy.0` or `population.1`.
///
/// # Safety
/// `summary` must be valid, `key` NUL-terminated, `value` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_summary_get(summary: *const QdkSummary, key: *const c_char, value: *mut f64) -> QdkStatus {
    guard(|| {
        let s = obj(summary, "summary")?;
        let key = str_arg(key, "key")?;
        let v = out(value, "value")?;
        let (_, x) = s
            .entries
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| Fail(QdkStatus::NotFound, format!("no result `{key}`")))?;
        *v = *x;
        Ok(())
    })
}

/// # Safety
/// `summary` must be NULL or come from `qdk_run` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn qdk_summary_free(summary: *mut QdkSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}

/// Assembles the Hamiltonian described by a configuration.
///
/// # Safety
/// `config` must be valid; `system` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_system_new(config: *const QdkConfig, system: *mut *mut QdkSystem) -> QdkStatus {
    guard(|| {
        let spec = &obj(config, "config")?.spec;
        let slot = out(system, "system")?;
        let sys = build_system(spec)?;
        *slot = Box::into_raw(Box::new(QdkSystem { sys }));
        Ok(())
    })
}

/// Grid points per channel and number of channels.
///
/// # Safety
/// `system` must be valid; outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qdk_system_size(system: *const QdkSystem, points: *mut usize, channels: *mut usize) -> QdkStatus {
    guard(|| {
        let s = &obj(system, "system")?.sys;
        if let Some(p) = points.as_mut() {
            *p = s.grid().size();
        }
        if let Some(c) = channels.as_mut() {
            *c = s.n_channels();
        }
        Ok(())
    })
}

/// Lowest `count` eigenvalues by dense diagonalization, ascending.
///
/// # Safety
/// `system` must be valid; `energies` must hold `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn qdk_bound_energies(system: *const QdkSystem, count: usize, energies: *mut f64) -> QdkStatus {
    guard(|| {
        let s = &obj(system, "system")?.sys;
        if count == 0 {
            return Err(Fail(QdkStatus::Config, "count must be at least 1".into()));
        }
        if energies.is_null() {
            return Err(null("energies"));
        }
        let res = solve_bound_states(s, count - 1, &EigenOptions::default())?;
        if res.energies.len() < count {
            return Err(Fail(QdkStatus::Numeric, format!("only {} states available", res.energies.len())));
        }
        std::slice::from_raw_parts_mut(energies, count).copy_from_slice(&res.energies[..count]);
        Ok(())
    })
}

/// # Safety
/// `system` must be NULL or come from `qdk_system_new` and not be used again.
/// Waves built on it stay valid.
#[no_mangle]
pub unsafe extern "C" fn qdk_system_free(system: *mut QdkSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Number of Chebychev terms kept for a scaled step `alpha` at `precision`;
/// `imaginary` selects the imaginary-time expansion.
///
/// # Safety
/// `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_cheby_count(alpha: f64, precision: f64, imaginary: bool, count: *mut usize) -> QdkStatus {
    guard(|| {
        let slot = out(count, "count")?;
        let mode = if imaginary { ChebyMode::Imag } else { ChebyMode::Real };
        *slot = cheby_coefficients(alpha, precision, mode)?.count();
        Ok(())
    })
}

/// The configured initial state (`psi.init`) on the system's grid.
///
/// # Safety
/// `config` and `system` must be valid; `wave` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_initial(config: *const QdkConfig, system: *const QdkSystem, wave: *mut *mut QdkWave) -> QdkStatus {
    guard(|| {
        let spec = &obj(config, "config")?.spec;
        let s = &obj(system, "system")?.sys;
        let slot = out(wave, "wave")?;
        let psi = initial_state(spec, s)?;
        *slot = Box::into_raw(Box::new(QdkWave { psi }));
        Ok(())
    })
}

/// Advances `wave` in place by `dt` under the field-free Hamiltonian with a
/// real-time Chebychev expansion. The absorber is not applied.
///
/// # Safety
/// `system` and `wave` must be valid and belong to the same grid.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_propagate(system: *const QdkSystem, wave: *mut QdkWave, dt: f64, precision: f64) -> QdkStatus {
    guard(|| {
        let s = &obj(system, "system")?.sys;
        let w = out(wave, "wave")?;
        w.psi = ChebyPropagator::new(s, dt, precision, ChebyMode::Real, None)?.step(&w.psi)?;
        Ok(())
    })
}

/// Norm, field-free energy and autocorrelation `<reference|wave>`.
///
/// # Safety
/// All handles must be valid; outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_expect(
    system: *const QdkSystem,
    wave: *const QdkWave,
    reference: *const QdkWave,
    norm: *mut f64,
    energy: *mut f64,
    acf_re: *mut f64,
    acf_im: *mut f64,
) -> QdkStatus {
    guard(|| {
        let s = &obj(system, "system")?.sys;
        let w = &obj(wave, "wave")?.psi;
        let r = &obj(reference, "reference")?.psi;
        let rec = expect(s, w, r, 0.0)?;
        for (p, v) in [(norm, rec.norm), (energy, rec.total), (acf_re, rec.autocorrelation.re), (acf_im, rec.autocorrelation.im)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies channel `channel` (zero-based, grid row-major) into `re`/`im`.
///
/// # Safety
/// `wave` must be valid; `re` and `im` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_values(wave: *const QdkWave, channel: usize, re: *mut f64, im: *mut f64, len: usize) -> QdkStatus {
    guard(|| {
        let w = &obj(wave, "wave")?.psi;
        let c = w
            .channels
            .get(channel)
            .ok_or_else(|| Fail(QdkStatus::NotFound, format!("channel {channel} outside 0..{}", w.n_channels())))?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        if len < c.len() {
            return Err(Fail(QdkStatus::BufferTooSmall, format!("{} values needed, {len} given", c.len())));
        }
        let (re, im) = (std::slice::from_raw_parts_mut(re, len), std::slice::from_raw_parts_mut(im, len));
        for (i, v) in c.iter().enumerate() {
            re[i] = v.re;
            im[i] = v.im;
        }
        Ok(())
    })
}

/// Independent copy of a wave.
///
/// # Safety
/// `wave` must be valid; `copy` writable.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_clone(wave: *const QdkWave, copy: *mut *mut QdkWave) -> QdkStatus {
    guard(|| {
        let w = obj(wave, "wave")?;
        *out(copy, "copy")? = Box::into_raw(Box::new(QdkWave { psi: w.psi.clone() }));
        Ok(())
    })
}

/// # Safety
/// `wave` must be NULL or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn qdk_wave_free(wave: *mut QdkWave) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}
