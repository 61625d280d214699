//! C ABI over the benchmark problems, sensitivity analysis and optimizer.
//!
//! Every function returns an [`FvsaStatus`]; on failure the message is kept per thread
//! and can be read with [`fvsa_last_error`]. Topologies cross the boundary as one byte
//! per element, 1 solid and 0 void, in the problem's element order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fvsa_core::bench::{Benchmark, MethodSpec, ProblemId, RunConfig};
use fvsa_core::beso::optimize;
use fvsa_core::fem::DensityVector;
use fvsa_core::fvsa::{norm_map, Equilibrium};
use fvsa_core::selective_inverse::SelectiveInverse;
use fvsa_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FvsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Wrong buffer length for the problem.
    LengthMismatch = 3,
    /// Factorization or solver failure.
    Numerical = 4,
    Config = 5,
    Panic = 6,
}

/// Opaque benchmark problem.
pub struct FvsaProblem {
    bench: Benchmark,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FvsaStatus {
    match e {
        Error::InvalidInput(_) | Error::InfeasibleMove(_) | Error::Guard(_) => FvsaStatus::InvalidArgument,
        Error::Config(_) => FvsaStatus::Config,
        Error::AtElement { source, .. } | Error::AtIteration { source, .. } => status_of(source),
        _ => FvsaStatus::Numerical,
    }
}

struct Fail(FvsaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any failure and converts panics into [`FvsaStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FvsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FvsaStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FvsaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail(FvsaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail(FvsaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn problem_arg<'a>(p: *const FvsaProblem) -> Result<&'a FvsaProblem, Fail> {
    p.as_ref().ok_or_else(|| Fail(FvsaStatus::NullPointer, "problem handle is null".into()))
}

unsafe fn topology_arg(p: &FvsaProblem, x: *const u8, len: usize) -> Result<DensityVector, Fail> {
    if x.is_null() {
        return Err(Fail(FvsaStatus::NullPointer, "topology is null".into()));
    }
    check_len(p, len)?;
    Ok(DensityVector::from_bits(std::slice::from_raw_parts(x, len))?)
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if ptr.is_null() {
        return Err(Fail(FvsaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn check_len(p: &FvsaProblem, len: usize) -> Result<(), Fail> {
    let n = p.bench.problem.n_elements();
    if len != n {
        return Err(Fail(FvsaStatus::LengthMismatch, format!("buffer of {len} for {n} elements")));
    }
    Ok(())
}

/// Builds a benchmark from its id, e.g. `"tie_beam_coarse"` or `"mbb(60,20)"`.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fvsa_problem_new(id: *const c_char, out: *mut *mut FvsaProblem) -> FvsaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(FvsaStatus::NullPointer, "output handle pointer is null".into()));
        }
        *out = ptr::null_mut();
        let id: ProblemId = str_arg(id, "problem id")?.parse()?;
        let bench = id.build()?;
        *out = Box::into_raw(Box::new(FvsaProblem { bench }));
        Ok(())
    })
}

/// Releases a handle from [`fvsa_problem_new`]. Null is ignored.
///
/// # Safety
/// `p` must come from [`fvsa_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fvsa_problem_free(p: *mut FvsaProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of elements, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fvsa_problem_n_elements(p: *const FvsaProblem) -> usize {
    p.as_ref().map_or(0, |p| p.bench.problem.n_elements())
}

/// Writes the benchmark's initial topology into `x`.
///
/// # Safety
/// `x` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fvsa_initial_topology(p: *const FvsaProblem, x: *mut u8, len: usize) -> FvsaStatus {
    guard(|| {
        let p = problem_arg(p)?;
        check_len(p, len)?;
        out_slice(x, len, "topology")?.copy_from_slice(&p.bench.initial.to_bits());
        Ok(())
    })
}

/// Compliance `½ fᵀu` of a topology.
///
/// # Safety
/// `x` must hold `len` bytes and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn fvsa_compliance(p: *const FvsaProblem, x: *const u8, len: usize, out: *mut f64) -> FvsaStatus {
    guard(|| {
        let p = problem_arg(p)?;
        let x = topology_arg(p, x, len)?;
        let out = out_slice(out, 1, "output")?;
        out[0] = Equilibrium::new(&p.bench.problem, &x)?.compliance;
        Ok(())
    })
}

/// Sensitivities of every element with a method written as in the config files,
/// e.g. `"woodbury"`, `"hoci(5)"` or `"cgm(2,2,jacobi,all)"`.
///
/// # Safety
/// `x` and `alpha` must each hold `len` entries; `method` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fvsa_sensitivity(
    p: *const FvsaProblem,
    x: *const u8,
    method: *const c_char,
    alpha: *mut f64,
    len: usize,
) -> FvsaStatus {
    guard(|| {
        let p = problem_arg(p)?;
        let x = topology_arg(p, x, len)?;
        let m: MethodSpec = str_arg(method, "method")?.parse()?;
        let out = out_slice(alpha, len, "alpha")?;
        let eq = Equilibrium::new(&p.bench.problem, &x)?;
        let s = m.resolve(RunConfig::default().eps_v).evaluate(&p.bench.problem, &eq)?;
        out.copy_from_slice(&s.alpha);
        Ok(())
    })
}

/// Spectral norm of every element operator `√K_i K⁻¹ √K_i`.
///
/// # Safety
/// `x` and `norms` must each hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn fvsa_norm_map(p: *const FvsaProblem, x: *const u8, norms: *mut f64, len: usize) -> FvsaStatus {
    guard(|| {
        let p = problem_arg(p)?;
        let x = topology_arg(p, x, len)?;
        let out = out_slice(norms, len, "norms")?;
        let eq = Equilibrium::new(&p.bench.problem, &x)?;
        let s = SelectiveInverse::from_envelope(&eq.factorization, p.bench.problem.pattern().clone())?;
        out.copy_from_slice(&norm_map(&p.bench.problem, &s)?);
        Ok(())
    })
}

/// Runs the optimizer from `x0` with `key = value` settings (newline separated, same keys as
/// the config files; `problem` is ignored). Writes the best topology and its compliance.
///
/// # Safety
/// `x0` and `x_best` must each hold `len` bytes; `config` must be NUL-terminated (may be
/// empty); `compliance` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fvsa_optimize(
    p: *const FvsaProblem,
    config: *const c_char,
    x0: *const u8,
    x_best: *mut u8,
    len: usize,
    compliance: *mut f64,
) -> FvsaStatus {
    guard(|| {
        let p = problem_arg(p)?;
        let x0 = topology_arg(p, x0, len)?;
        let cfg = RunConfig::parse(str_arg(config, "config")?)?;
        let out = out_slice(x_best, len, "x_best")?;
        let c = out_slice(compliance, 1, "compliance")?;
        let r = optimize(&p.bench.problem, &cfg.optimizer(), &x0)?;
        out.copy_from_slice(&r.x.to_bits());
        c[0] = r.compliance;
        Ok(())
    })
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated
/// to fit) and returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fvsa_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        unsafe {
            fvsa_last_error(buf.as_mut_ptr(), buf.len());
            CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
        }
    }

    #[test]
    fn bad_id_is_reported() {
        let id = CString::new("no_such_problem").unwrap();
        let mut p = ptr::null_mut();
        let st = unsafe { fvsa_problem_new(id.as_ptr(), &mut p) };
        assert_eq!(st, FvsaStatus::Config);
        assert!(p.is_null());
        assert!(last_error().contains("no_such_problem"));
    }

    #[test]
    fn null_arguments() {
        let mut c = 0.0;
        assert_eq!(unsafe { fvsa_compliance(ptr::null(), ptr::null(), 0, &mut c) }, FvsaStatus::NullPointer);
        assert_eq!(unsafe { fvsa_problem_n_elements(ptr::null()) }, 0);
        unsafe { fvsa_problem_free(ptr::null_mut()) };
    }

    #[test]
    fn truncated_error_message() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        let n = unsafe { fvsa_last_error(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }
}
