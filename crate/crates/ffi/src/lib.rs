//! C interface to `cohort_select`.
//!
//! Every function returns a status code (`CS_OK` on success). On failure the
//! message is kept per thread and read back with [`cs_last_error_message`].
//! Handles are opaque and released with their matching `*_free` function;
//! strings returned by the library are released with [`cs_string_free`].
//! Structured inputs (schemas, ideal specs) are passed as JSON text.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cohort_select::allocation::apportion;
use cohort_select::baselines::{range_wrapper, run_baseline, BaselineContext, BaselineMethod, NeymanConfig};
use cohort_select::ideal::{validate_spec, IdealSpec, Variation};
use cohort_select::metrics::cosine_distance;
use cohort_select::optimizer::{solve, SolveProblem, SolveResult, Tolerances, DEFAULT_MULTISTART};
use cohort_select::population::{load_population, stratify, CharacteristicSchema, Population, StratificationIndex};
use cohort_select::Error;

pub const CS_OK: i32 = 0;
pub const CS_ERR_NULL: i32 = 1;
pub const CS_ERR_INVALID: i32 = 2;
pub const CS_ERR_INFEASIBLE: i32 = 3;
/// The result handle is still written; it holds the best iterate found.
pub const CS_ERR_NOT_CONVERGED: i32 = 4;
pub const CS_ERR_IO: i32 = 5;
pub const CS_ERR_PANIC: i32 = 6;

/// A loaded population and its stratification.
pub struct CsStudy {
    population: Population,
    index: StratificationIndex,
}

/// The outcome of one optimizer run.
pub struct CsSolveResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

enum Failure {
    Code(i32, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Code(CS_ERR_NULL, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Code(CS_ERR_INVALID, msg.into())
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => CS_ERR_INFEASIBLE,
        Error::Io { .. } | Error::Csv(_) => CS_ERR_IO,
        _ => CS_ERR_INVALID,
    }
}

fn guard(f: impl FnOnce() -> Result<i32, Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(code)) => {
            if code == CS_OK {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            code
        }
        Ok(Err(Failure::Code(code, msg))) => {
            set_error(msg);
            code
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            code_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CS_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err(invalid(format!("buffer holds {len} values but {} are needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| invalid("output contains a NUL byte"))
}

/// The message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a CSV population and stratifies it by the characteristics in
/// `schemas_json` (a JSON array of characteristic schemas).
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_study_load(
    csv_path: *const c_char,
    id_column: *const c_char,
    schemas_json: *const c_char,
    out: *mut *mut CsStudy,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(csv_path, "csv_path")?;
        let id = str_arg(id_column, "id_column")?;
        let schemas: Vec<CharacteristicSchema> = serde_json::from_str(str_arg(schemas_json, "schemas_json")?)
            .map_err(|e| invalid(format!("schemas_json: {e}")))?;
        let population = load_population(path, id)?;
        let index = stratify(&population, &schemas)?;
        *out = Box::into_raw(Box::new(CsStudy { population, index }));
        Ok(CS_OK)
    })
}

/// # Safety
/// `study` must come from [`cs_study_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cs_study_free(study: *mut CsStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

/// Population size and number of strata.
///
/// # Safety
/// `study` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_study_shape(study: *const CsStudy, subjects: *mut usize, strata: *mut usize) -> i32 {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        if !subjects.is_null() {
            *subjects = s.index.total();
        }
        if !strata.is_null() {
            *strata = s.index.dimension();
        }
        Ok(CS_OK)
    })
}

/// Writes the joint initial distribution into `out[..len]`.
///
/// # Safety
/// `study` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_study_joint_initial(study: *const CsStudy, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        copy_out(&s.index.joint_initial(), out, len)?;
        Ok(CS_OK)
    })
}

/// Per-stratum capacity caps `init_h / n`.
///
/// # Safety
/// `study` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_study_caps(study: *const CsStudy, sample_size: usize, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        if sample_size == 0 {
            return Err(invalid("sample size must be positive"));
        }
        copy_out(&s.index.caps(sample_size), out, len)?;
        Ok(CS_OK)
    })
}

fn finish_solve(result: SolveResult, out: *mut *mut CsSolveResult) -> i32 {
    let converged = result.converged;
    unsafe { *out = Box::into_raw(Box::new(CsSolveResult { inner: result })) };
    if converged {
        CS_OK
    } else {
        set_error("the solver did not converge");
        CS_ERR_NOT_CONVERGED
    }
}

/// Solves the fixed problem for a given joint ideal and caps of length `d`.
/// `multistart` = 0 picks the default.
///
/// # Safety
/// `joint_ideal` and `caps` must hold `d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_solve_fixed(
    joint_ideal: *const f64,
    caps: *const f64,
    d: usize,
    sample_size: usize,
    seed: u64,
    multistart: usize,
    out: *mut *mut CsSolveResult,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ji = slice_arg(joint_ideal, d, "joint_ideal")?.to_vec();
        let caps = slice_arg(caps, d, "caps")?.to_vec();
        let starts = if multistart == 0 { DEFAULT_MULTISTART } else { multistart };
        let problem = SolveProblem::fixed(ji, caps, sample_size)
            .with_seed(seed)
            .with_multistart(starts)
            .with_tolerances(Tolerances::default());
        Ok(finish_solve(solve(&problem)?, out))
    })
}

fn parse_spec(study: &CsStudy, spec_json: &str) -> Result<IdealSpec, Failure> {
    let spec: IdealSpec = serde_json::from_str(spec_json).map_err(|e| invalid(format!("spec_json: {e}")))?;
    validate_spec(&spec, &study.index).into_result()?;
    Ok(spec)
}

/// Runs the optimizer on an ideal spec (JSON) over the study's strata. Fixed,
/// range and generalized specs are all accepted.
///
/// # Safety
/// `study` must be a live handle, `spec_json` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cs_solve_spec(
    study: *const CsStudy,
    spec_json: *const c_char,
    seed: u64,
    multistart: usize,
    out: *mut *mut CsSolveResult,
) -> i32 {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = parse_spec(s, str_arg(spec_json, "spec_json")?)?;
        let starts = if multistart == 0 { DEFAULT_MULTISTART } else { multistart };
        let problem = SolveProblem::from_spec(&spec, &s.index)?.with_seed(seed).with_multistart(starts);
        Ok(finish_solve(solve(&problem)?, out))
    })
}

/// # Safety
/// `result` must come from a solve call and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cs_result_free(result: *mut CsSolveResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of strata in the result.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cs_result_dimension(result: *const CsSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.fractions.len())
}

/// Cosine distance of the result to its joint ideal; NaN for null.
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cs_result_objective(result: *const CsSolveResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.objective)
}

/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cs_result_converged(result: *const CsSolveResult) -> bool {
    result.as_ref().is_some_and(|r| r.inner.converged)
}

/// # Safety
/// `result` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_result_fractions(result: *const CsSolveResult, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.inner.fractions, out, len)?;
        Ok(CS_OK)
    })
}

/// # Safety
/// `result` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cs_result_joint_ideal(result: *const CsSolveResult, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.inner.joint_ideal, out, len)?;
        Ok(CS_OK)
    })
}

/// The full result as JSON; release with [`cs_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_result_to_json(result: *const CsSolveResult, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(&r.inner).map_err(|e| Failure::Lib(e.into()))?;
        *out = into_c_string(text)?;
        Ok(CS_OK)
    })
}

/// Runs a baseline (`psrs`, `neyman`, `ra` or `wrs`) on a fixed or range
/// spec and writes its allocation as JSON. `neyman_column` names the numeric
/// column used by `neyman` and may otherwise be null. `step` is the lattice
/// step for ranged marginals.
///
/// # Safety
/// `study` must be a live handle, strings NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_baseline_json(
    study: *const CsStudy,
    method: *const c_char,
    spec_json: *const c_char,
    neyman_column: *const c_char,
    step: f64,
    seed: u64,
    out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let s = study.as_ref().ok_or_else(|| null("study"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method: BaselineMethod = str_arg(method, "method")?.parse()?;
        let spec = parse_spec(s, str_arg(spec_json, "spec_json")?)?;
        let neyman = if neyman_column.is_null() {
            None
        } else {
            Some(NeymanConfig { pilot_seed: seed, ..NeymanConfig::new(str_arg(neyman_column, "neyman_column")?) })
        };
        let ctx = BaselineContext { population: Some(&s.population), neyman: neyman.as_ref(), seed };
        let alloc = match spec.variation() {
            Variation::Fixed => {
                run_baseline(method, &s.index, &spec.fixed_marginals(&s.index)?, spec.sample_size, &ctx)?
            }
            _ => range_wrapper(method, &s.index, &spec, step, &ctx)?.best,
        };
        let text = serde_json::to_string(&alloc).map_err(|e| Failure::Lib(e.into()))?;
        *out = into_c_string(text)?;
        Ok(CS_OK)
    })
}

/// Largest-remainder counts for `fractions` under per-stratum `caps`.
///
/// # Safety
/// `fractions`, `caps` and `out_counts` must each hold `d` elements.
#[no_mangle]
pub unsafe extern "C" fn cs_apportion(
    fractions: *const f64,
    caps: *const usize,
    d: usize,
    n: usize,
    out_counts: *mut usize,
) -> i32 {
    guard(|| {
        let f = slice_arg(fractions, d, "fractions")?;
        let c = slice_arg(caps, d, "caps")?;
        if out_counts.is_null() && d > 0 {
            return Err(null("out_counts"));
        }
        let counts = apportion(f, c, n)?;
        if d > 0 {
            ptr::copy_nonoverlapping(counts.as_ptr(), out_counts, d);
        }
        Ok(CS_OK)
    })
}

/// `1 - cos(u, v)`.
///
/// # Safety
/// `u` and `v` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_cosine_distance(u: *const f64, v: *const f64, len: usize, out: *mut f64) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = cosine_distance(slice_arg(u, len, "u")?, slice_arg(v, len, "v")?)?;
        Ok(CS_OK)
    })
}
