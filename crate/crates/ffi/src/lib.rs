//! C ABI over the vertexlab library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a status
//! code; on failure the message is kept per thread and can be fetched with
//! [`vl_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vertexlab::error::Error;
use vertexlab::harness::{run_check, ExperimentSpec};
use vertexlab::moments::moment_height_residues;
use vertexlab::params::ModelParams;
use vertexlab::rng::stream;
use vertexlab::schur::{length_law, tracy_widom_cdf, SchurSetup, DEFAULT_KERNEL_NODES};
use vertexlab::vertex::{Boundary, HeightField, QuadrantSampler};

pub const VL_OK: i32 = 0;
pub const VL_ERR_NULL: i32 = 1;
pub const VL_ERR_INVALID_Q: i32 = 2;
pub const VL_ERR_INVALID_PARAMS: i32 = 3;
pub const VL_ERR_COLLISION: i32 = 4;
pub const VL_ERR_NUMERICAL: i32 = 5;
pub const VL_ERR_IO: i32 = 6;
pub const VL_ERR_CONFIG: i32 = 7;
pub const VL_ERR_BUFFER: i32 = 8;
pub const VL_ERR_PANIC: i32 = 9;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::InvalidQ(_) => VL_ERR_INVALID_Q,
        Error::InvalidParams(_) => VL_ERR_INVALID_PARAMS,
        Error::Collision(_) => VL_ERR_COLLISION,
        Error::NegativeWeight { .. } | Error::NotConverged(_) | Error::Infeasible(_) => VL_ERR_NUMERICAL,
        Error::Io(_) | Error::Json(_) => VL_ERR_IO,
        Error::Config(_) => VL_ERR_CONFIG,
    }
}

enum Failure {
    Null(&'static str),
    Buffer(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any error or panic and maps it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VL_OK,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            VL_ERR_NULL
        }
        Ok(Err(Failure::Buffer(msg))) => {
            set_error(msg);
            VL_ERR_BUFFER
        }
        Ok(Err(Failure::Lib(e))) => {
            let code = status_of(&e);
            set_error(e.to_string());
            code
        }
        Err(_) => {
            set_error("panic inside vertexlab".into());
            VL_ERR_PANIC
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(Failure::Buffer(format!("{what} holds {len} values, {need} needed")));
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Model parameters `q`, `u_1..u_T`, `a_1..a_N`, `nu_1..nu_N`.
pub struct VlParams(ModelParams);

/// A vertex-model sampler in a fixed window with its own random stream.
pub struct VlSampler {
    sampler: QuadrantSampler,
    field: HeightField,
    seed: u64,
    next: u64,
}

/// Message of the last failed call on this thread, or null. Free the result
/// with [`vl_string_free`].
#[no_mangle]
pub extern "C" fn vl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn vl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `u` must point to `t_len` doubles, `a` and `nu` to `n_len` doubles each,
/// and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn vl_params_new(
    q: f64,
    u: *const f64,
    t_len: usize,
    a: *const f64,
    nu: *const f64,
    n_len: usize,
    out: *mut *mut VlParams,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let u = slice(u, t_len, "u")?.to_vec();
        let a = slice(a, n_len, "a")?.to_vec();
        let nu = slice(nu, n_len, "nu")?.to_vec();
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidQ(q).into());
        }
        *out = Box::into_raw(Box::new(VlParams(ModelParams::new(q, u, a, nu))));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`vl_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vl_params_free(p: *mut VlParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `order` 0 selects the step boundary, `r >= 1` the step-Bernoulli boundary
/// of order `r` (needs `nu_1 = ... = nu_r = 0`).
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vl_sampler_new(
    params: *const VlParams,
    order: u32,
    n_max: usize,
    t_max: usize,
    seed: u64,
    out: *mut *mut VlSampler,
) -> i32 {
    guard(|| {
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let boundary = match order {
            0 => Boundary::Step,
            1 => Boundary::StepBernoulli,
            r => Boundary::GenStepBernoulli(r),
        };
        let sampler = QuadrantSampler::new(&p.0, boundary, n_max, t_max)?;
        let field = sampler.empty_field();
        *out = Box::into_raw(Box::new(VlSampler { sampler, field, seed, next: 0 }));
        Ok(())
    })
}

/// Number of heights one sample writes: `(n_max + 1) * (t_max + 1)`.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vl_sampler_field_len(s: *const VlSampler) -> usize {
    s.as_ref().map_or(0, |s| (s.field.n_max + 1) * (s.field.t_max + 1))
}

/// Draws the next sample and writes `h(N, T)` at index `T * (n_max + 1) + N - 1`.
/// Sample `k` of a sampler created with `seed` is the same on every platform.
///
/// # Safety
/// `s` must be a live handle, `heights` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn vl_sampler_sample(s: *mut VlSampler, heights: *mut u32, len: usize) -> i32 {
    guard(|| {
        let s = s.as_mut().ok_or(Failure::Null("sampler"))?;
        let (n_max, t_max) = (s.field.n_max, s.field.t_max);
        let out = out_slice(heights, len, (n_max + 1) * (t_max + 1), "heights")?;
        s.sampler.sample_into(&mut stream(s.seed, s.next), &mut s.field);
        s.next += 1;
        for t in 0..=t_max {
            for n in 1..=n_max + 1 {
                out[t * (n_max + 1) + n - 1] = s.field.get(n, t);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`vl_sampler_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vl_sampler_free(s: *mut VlSampler) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// `E prod_i q^{h(N_i + 1, T)}` under the step boundary, exactly.
///
/// # Safety
/// `params` must be a live handle, `n_list` must point to `len` values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vl_moment(params: *const VlParams, n_list: *const usize, len: usize, t: usize, out: *mut f64) -> i32 {
    guard(|| {
        let p = params.as_ref().ok_or(Failure::Null("params"))?;
        let n_list = slice(n_list, len, "n_list")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = moment_height_residues(n_list, t, &p.0)?;
        Ok(())
    })
}

/// Writes `P(length = k)` for `k = 0..=t` in the homogeneous Schur setup.
///
/// # Safety
/// `law` must point to `len >= t + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vl_schur_length_law(q: f64, u: f64, a1: f64, n: usize, t: usize, law: *mut f64, len: usize) -> i32 {
    guard(|| {
        let out = out_slice(law, len, t + 1, "law")?;
        let setup = SchurSetup::new(q, u, a1, n, t)?;
        let v = length_law(&setup, DEFAULT_KERNEL_NODES)?;
        out[..v.len()].copy_from_slice(&v);
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn vl_tracy_widom_cdf(r: f64) -> f64 {
    tracy_widom_cdf(r)
}

/// Runs one acceptance check by id. `pass` receives 1 or 0; `report_json`,
/// when not null, receives the report, to be freed with [`vl_string_free`].
///
/// # Safety
/// `id` must be a NUL-terminated string, `pass` writable.
#[no_mangle]
pub unsafe extern "C" fn vl_run_check(id: *const c_char, seed: u64, pass: *mut i32, report_json: *mut *mut c_char) -> i32 {
    guard(|| {
        if id.is_null() {
            return Err(Failure::Null("id"));
        }
        let pass = pass.as_mut().ok_or(Failure::Null("pass"))?;
        let id = CStr::from_ptr(id).to_str().map_err(|_| Error::Config("check id is not UTF-8".into()))?;
        let report = run_check(&ExperimentSpec::new(id), seed)?;
        *pass = i32::from(report.pass);
        if !report_json.is_null() {
            let s = serde_json::to_string(&report).map_err(Error::from)?;
            *report_json = CString::new(s).unwrap_or_default().into_raw();
        }
        Ok(())
    })
}
