//! C ABI over `ietlab`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released with the matching `*_free`. Every call returns an
//! [`IetlabStatus`]; on failure the message is available from
//! [`ietlab_last_error`] on the same thread. Panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ietlab::cocycle::LogCocycle;
use ietlab::correction::{correction_operator, CorrectionOptions};
use ietlab::iet::Convention;
use ietlab::lab::{Loaded, Run};
use ietlab::rauzy::PeriodicIet;
use ietlab::Error;
use rand::SeedableRng;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IetlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    /// A numerical precondition failed (discontinuity, divergence, level cap...).
    Numerical = 3,
    BufferTooSmall = 4,
    Io = 5,
    Panic = 6,
}

/// A periodic-type interval exchange with its period data.
pub struct IetlabInstance(PeriodicIet);

/// A cocycle over the base exchange of an instance.
pub struct IetlabCocycle(LogCocycle);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> IetlabStatus {
    match e {
        Error::Invalid(_)
        | Error::InvalidPermutation(_)
        | Error::Reducible { .. }
        | Error::NonPositiveLength { .. }
        | Error::NotClosed(_)
        | Error::NotPrimitive
        | Error::OutsideDomain { .. } => IetlabStatus::InvalidInput,
        Error::Io(_) => IetlabStatus::Io,
        _ => IetlabStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), IetlabStatus>) -> IetlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IetlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside ietlab".into());
            IetlabStatus::Panic
        }
    }
}

fn lift<T>(r: ietlab::Result<T>) -> Result<T, IetlabStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null(what: &str) -> IetlabStatus {
    set_error(format!("{what} is null"));
    IetlabStatus::NullArgument
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, IetlabStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        IetlabStatus::InvalidInput
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, IetlabStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), IetlabStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, v: &[f64]) -> Result<(), IetlabStatus> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < v.len() {
        set_error(format!("buffer holds {len} values, {} needed", v.len()));
        return Err(IetlabStatus::BufferTooSmall);
    }
    std::ptr::copy_nonoverlapping(v.as_ptr(), out, v.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ietlab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ietlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Builds a bundled instance (golden, rev4, rev5, torus3).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_from_catalog(name: *const c_char, out: *mut *mut IetlabInstance) -> IetlabStatus {
    guard(|| {
        let name = text(name, "name")?;
        let p = lift(ietlab::catalog::build(name))?;
        write(out, Box::into_raw(Box::new(IetlabInstance(p))), "out")
    })
}

/// Builds an instance from a loop descriptor {"pair": {...}, "moves": [...]}.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_from_loop_json(json: *const c_char, out: *mut *mut IetlabInstance) -> IetlabStatus {
    guard(|| {
        let json = text(json, "json")?;
        let l = lift(serde_json::from_str(json).map_err(Error::from))?;
        let p = lift(ietlab::rauzy::build_from_loop_json(&l))?;
        write(out, Box::into_raw(Box::new(IetlabInstance(p))), "out")
    })
}

/// # Safety
/// `p` must come from an `ietlab_instance_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_free(p: *mut IetlabInstance) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of intervals.
///
/// # Safety
/// `p` must be a live instance handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_dim(p: *const IetlabInstance, out: *mut usize) -> IetlabStatus {
    guard(|| write(out, handle(p, "instance")?.0.d(), "out"))
}

/// Perron-Frobenius eigenvalue of the period matrix.
///
/// # Safety
/// `p` must be a live instance handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_rho(p: *const IetlabInstance, out: *mut f64) -> IetlabStatus {
    guard(|| write(out, handle(p, "instance")?.0.rho, "out"))
}

/// Interval lengths of the normalized base exchange, in alphabet order.
///
/// # Safety
/// `p` must be a live instance handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_lengths(p: *const IetlabInstance, out: *mut f64, len: usize) -> IetlabStatus {
    guard(|| fill(out, len, &handle(p, "instance")?.0.base.lambda))
}

/// T(x) for the base exchange, intervals closed on the left.
///
/// # Safety
/// `p` must be a live instance handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_instance_evaluate(p: *const IetlabInstance, x: f64, out: *mut f64) -> IetlabStatus {
    guard(|| {
        let y = lift(handle(p, "instance")?.0.base.evaluate(x, Convention::LeftClosed))?;
        write(out, y, "out")
    })
}

/// Random strongly symmetric log cocycle with a polynomial part of the given
/// degree, shifted to zero mean.
///
/// # Safety
/// `p` must be a live instance handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_cocycle_random_symmetric(
    p: *const IetlabInstance,
    seed: u64,
    poly_degree: usize,
    out: *mut *mut IetlabCocycle,
) -> IetlabStatus {
    guard(|| {
        let p = &handle(p, "instance")?.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (cp, cm) = ietlab::cocycle::random_symmetric_constants(&p.base, &p.saddle, &mut rng);
        let g = if poly_degree == 0 {
            p.base.lambda.iter().map(|&l| ietlab::cocycle::Piece::zero(l)).collect()
        } else {
            ietlab::cocycle::random_poly_part(&p.base, poly_degree, &mut rng)
        };
        let phi = lift(LogCocycle::new(0, p.base.clone(), cp, cm, g))?;
        let m = phi.mean();
        let phi = phi.add_constants(&vec![-m; p.d()]);
        write(out, Box::into_raw(Box::new(IetlabCocycle(phi))), "out")
    })
}

/// Cocycle from its JSON form over the instance's base exchange.
///
/// # Safety
/// `p` must be a live instance handle, `json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_cocycle_from_json(
    p: *const IetlabInstance,
    json: *const c_char,
    out: *mut *mut IetlabCocycle,
) -> IetlabStatus {
    guard(|| {
        let p = &handle(p, "instance")?.0;
        let j = lift(serde_json::from_str(text(json, "json")?).map_err(Error::from))?;
        let phi = lift(LogCocycle::from_json(&p.base, &j))?;
        write(out, Box::into_raw(Box::new(IetlabCocycle(phi))), "out")
    })
}

/// # Safety
/// `c` must come from an `ietlab_cocycle_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ietlab_cocycle_free(c: *mut IetlabCocycle) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Blog: the total mass of the logarithmic constants.
///
/// # Safety
/// `c` must be a live cocycle handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_cocycle_blog(c: *const IetlabCocycle, out: *mut f64) -> IetlabStatus {
    guard(|| write(out, handle(c, "cocycle")?.0.blog(), "out"))
}

/// Birkhoff sum of `n` terms starting at `x` (negative `n` sums backwards).
///
/// # Safety
/// `c` must be a live cocycle handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_birkhoff_sum(c: *const IetlabCocycle, x: f64, n: i64, out: *mut f64) -> IetlabStatus {
    guard(|| {
        let v = lift(ietlab::birkhoff::birkhoff_sum(&handle(c, "cocycle")?.0, x, n))?;
        write(out, v, "out")
    })
}

/// The correction vector h of a zero-mean cocycle (`len` >= dimension) and
/// the gap to the regression cross-check. `tol` <= 0 selects the default.
///
/// # Safety
/// Handles must be live; `h` must hold `len` doubles; `gap` may be null.
#[no_mangle]
pub unsafe extern "C" fn ietlab_correction(
    p: *const IetlabInstance,
    c: *const IetlabCocycle,
    tol: f64,
    h: *mut f64,
    len: usize,
    gap: *mut f64,
) -> IetlabStatus {
    guard(|| {
        let p = &handle(p, "instance")?.0;
        let phi = &handle(c, "cocycle")?.0;
        let mut opts = CorrectionOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        let r = lift(correction_operator(p, phi, &opts))?;
        fill(h, len, &r.h)?;
        if !gap.is_null() {
            gap.write(r.oracle_gap);
        }
        Ok(())
    })
}

/// Runs a scenario given as JSON text and writes its artifacts to `out_dir`.
/// Relative paths inside the scenario resolve against `out_dir`. The number
/// of failed hard gates goes to `hard_failures`.
///
/// # Safety
/// Strings must be NUL-terminated; `hard_failures` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ietlab_run_scenario(
    scenario_json: *const c_char,
    out_dir: *const c_char,
    hard_failures: *mut usize,
) -> IetlabStatus {
    guard(|| {
        let dir = Path::new(text(out_dir, "out_dir")?);
        let loaded = lift(Loaded::from_str(text(scenario_json, "scenario_json")?, dir))?;
        let run: Run = lift(ietlab::lab::run(&loaded, None))?;
        lift(run.write(dir))?;
        write(hard_failures, run.hard_failures().len(), "hard_failures")
    })
}
