//! C interface to `gatecert`.
//!
//! Objects are opaque heap handles released with the matching `gc_*_free`.
//! Every fallible function returns a [`GcStatus`]; on failure the message is
//! available from [`gc_last_error`] on the same thread. Strings returned
//! through out parameters are owned by the caller and released with
//! [`gc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gatecert::adversary::AdversarySpec;
use gatecert::bell::{classical_bound, functional_I, functional_K};
use gatecert::certify::{certify, certify_realization, CertificationReport, Verdict};
use gatecert::config::parse_gate_arg;
use gatecert::network::{born_table, reference_realization, ProbabilityTable, Realization, Scheme};
use gatecert::primitives::{gate, Branch, GateSpec, GhzIndex};
use gatecert::tensor::{Matrix, Operator, C64};
use gatecert::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Dimension = 4,
    Numerical = 5,
    NotCertified = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcScheme {
    AlmostDi = 0,
    Di = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcBranch {
    Plus = 0,
    Minus = 1,
}

/// A network realization together with its target gate.
pub struct GcRealization {
    real: Realization,
    u: Operator,
}

pub struct GcTable {
    table: ProbabilityTable,
}

pub struct GcReport {
    report: CertificationReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> GcStatus {
    match err {
        Error::InvalidArgument(_) | Error::InvalidRealization(_) => GcStatus::InvalidArgument,
        Error::Parse(_) => GcStatus::Parse,
        Error::InvalidDims(_)
        | Error::DimensionMismatch(_)
        | Error::SiteOutOfRange { .. }
        | Error::EmptyProduct
        | Error::MissingSettings(_) => GcStatus::Dimension,
        Error::NotUnitary { .. }
        | Error::NotHermitian { .. }
        | Error::ZeroProbability(_)
        | Error::ComplexCoefficient { .. } => GcStatus::Numerical,
        Error::NotCertified(_) | Error::MixedBranch => GcStatus::NotCertified,
        Error::Io(_) => GcStatus::Io,
    }
}

struct Fail(GcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GcStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            GcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GcStatus::Parse, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(GcStatus::Parse, e.to_string()))?;
    put(out, c.into_raw())
}

fn scheme_of(s: GcScheme) -> Scheme {
    match s {
        GcScheme::AlmostDi => Scheme::AlmostDi,
        GcScheme::Di => Scheme::Di,
    }
}

fn branch_of(b: GcBranch) -> Branch {
    match b {
        GcBranch::Plus => Branch::Plus,
        GcBranch::Minus => Branch::Minus,
    }
}

fn build(scheme: GcScheme, n: u32, spec: &GateSpec, branch: GcBranch) -> Result<GcRealization, Fail> {
    let n = n as usize;
    if !(2..=3).contains(&n) {
        return Err(Fail(GcStatus::InvalidArgument, format!("N = {n} not in {{2, 3}}")));
    }
    let u = gate(spec, n)?;
    let real = reference_realization(n, &u, branch_of(branch), scheme_of(scheme))?;
    Ok(GcRealization { real, u })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `gc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reference realization for a named gate (`"cnot"`, `"toffoli"`, ...) or
/// `"random:<seed>"`.
///
/// # Safety
/// `gate_name` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_realization_reference(
    scheme: GcScheme,
    n: u32,
    gate_name: *const c_char,
    branch: GcBranch,
    out: *mut *mut GcRealization,
) -> GcStatus {
    guard(|| {
        let spec = parse_gate_arg(str_arg(gate_name, "gate name")?)?;
        put(out, boxed(build(scheme, n, &spec, branch)?))
    })
}

/// Reference realization for an explicit `2^n × 2^n` gate given as
/// row-major real and imaginary parts.
///
/// # Safety
/// `re` and `im` must each point to `4^n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_realization_from_matrix(
    scheme: GcScheme,
    n: u32,
    re: *const f64,
    im: *const f64,
    branch: GcBranch,
    out: *mut *mut GcRealization,
) -> GcStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(null("matrix data"));
        }
        if !(2..=3).contains(&n) {
            return Err(Fail(GcStatus::InvalidArgument, format!("N = {n} not in {{2, 3}}")));
        }
        let dim = 1usize << n;
        let re = std::slice::from_raw_parts(re, dim * dim);
        let im = std::slice::from_raw_parts(im, dim * dim);
        let m = Matrix::from_fn(dim, dim, |i, j| C64::new(re[i * dim + j], im[i * dim + j]));
        put(out, boxed(build(scheme, n, &GateSpec::Matrix(m), branch)?))
    })
}

/// Apply a JSON adversary script, producing a new realization.
///
/// # Safety
/// `real` must be a live handle, `script` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_realization_attack(
    real: *const GcRealization,
    script: *const c_char,
    out: *mut *mut GcRealization,
) -> GcStatus {
    guard(|| {
        let r = obj(real, "realization")?;
        let spec = AdversarySpec::from_json(str_arg(script, "adversary script")?)?;
        let attacked = spec.apply(&r.real)?;
        put(out, boxed(GcRealization { real: attacked, u: r.u.clone() }))
    })
}

/// # Safety
/// `real` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_realization_free(real: *mut GcRealization) {
    if !real.is_null() {
        drop(Box::from_raw(real));
    }
}

/// Exact Born table of a realization.
///
/// # Safety
/// `real` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_table_simulate(real: *const GcRealization, out: *mut *mut GcTable) -> GcStatus {
    guard(|| {
        let table = born_table(&obj(real, "realization")?.real)?;
        put(out, boxed(GcTable { table }))
    })
}

/// Parse a table from its JSON-lines text.
///
/// # Safety
/// `text` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_table_from_jsonl(text: *const c_char, out: *mut *mut GcTable) -> GcStatus {
    guard(|| {
        let table = ProbabilityTable::read_jsonl(str_arg(text, "table text")?.as_bytes())?;
        put(out, boxed(GcTable { table }))
    })
}

/// Serialize a table as JSON lines. Free the result with [`gc_string_free`].
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_table_to_jsonl(table: *const GcTable, out: *mut *mut c_char) -> GcStatus {
    guard(|| {
        let mut buf = Vec::new();
        obj(table, "table")?.table.write_jsonl(&mut buf)?;
        put_string(out, String::from_utf8(buf).expect("JSON is UTF-8"))
    })
}

/// Number of recorded entries.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_table_len(table: *const GcTable, out: *mut usize) -> GcStatus {
    guard(|| {
        let t = &obj(table, "table")?.table;
        put(out, t.raw().iter().filter(|p| p.is_some()).count())
    })
}

/// Largest absolute entry difference between two tables of the same shape.
///
/// # Safety
/// Both tables must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_table_distance(a: *const GcTable, b: *const GcTable, out: *mut f64) -> GcStatus {
    guard(|| {
        let (a, b) = (&obj(a, "table")?.table, &obj(b, "table")?.table);
        if a.spec() != b.spec() {
            return Err(Fail(GcStatus::Dimension, "tables describe different scenarios".into()));
        }
        put(out, a.max_abs_diff(b))
    })
}

/// # Safety
/// `table` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_table_free(table: *mut GcTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Certify a table against a gate given by name or `"random:<seed>"`.
///
/// # Safety
/// `table` must be a live handle, `gate_name` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_certify_table(
    table: *const GcTable,
    gate_name: *const c_char,
    tol: f64,
    out: *mut *mut GcReport,
) -> GcStatus {
    guard(|| {
        let t = &obj(table, "table")?.table;
        let u = gate(&parse_gate_arg(str_arg(gate_name, "gate name")?)?, t.spec().n)?;
        put(out, boxed(GcReport { report: certify(t, &u, tol)? }))
    })
}

/// Statistical and operator-level certification of a realization against
/// its own target gate.
///
/// # Safety
/// `real` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_certify_realization(
    real: *const GcRealization,
    tol: f64,
    out: *mut *mut GcReport,
) -> GcStatus {
    guard(|| {
        let r = obj(real, "realization")?;
        put(out, boxed(GcReport { report: certify_realization(&r.real, &r.u, tol)? }))
    })
}

/// 1 if certified, 0 if not, -1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_report_certified(report: *const GcReport) -> i32 {
    match report.as_ref() {
        Some(r) => (r.report.verdict == Verdict::Certified) as i32,
        None => -1,
    }
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_report_max_residual(report: *const GcReport, out: *mut f64) -> GcStatus {
    guard(|| put(out, obj(report, "report")?.report.max_residual))
}

/// Number of failing checks.
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_report_failing(report: *const GcReport, out: *mut usize) -> GcStatus {
    guard(|| put(out, obj(report, "report")?.report.failing().len()))
}

/// Full report as JSON. Free the result with [`gc_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gc_report_to_json(report: *const GcReport, out: *mut *mut c_char) -> GcStatus {
    guard(|| put_string(out, obj(report, "report")?.report.to_json()?))
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_report_free(report: *mut GcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Local (deterministic) maximum of the GHZ-type functional with label `l`
/// (bits packed most significant first).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_classical_bound_ghz(n: u32, l: u32, out: *mut f64) -> GcStatus {
    guard(|| {
        let idx = GhzIndex::from_int(n as usize, l as usize)?;
        put(out, classical_bound(&functional_I(&idx))?.value)
    })
}

/// Local maximum of the swap functional of `subnet` for repeater outcome
/// `r = 2 r1 + r2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gc_classical_bound_swap(n: u32, subnet: u32, r: u32, out: *mut f64) -> GcStatus {
    guard(|| {
        if r > 3 {
            return Err(Fail(GcStatus::InvalidArgument, format!("repeater outcome {r} not in 0..4")));
        }
        let f = functional_K(n as usize, subnet as usize, [(r >> 1) as u8, (r & 1) as u8])?;
        put(out, classical_bound(&f)?.value)
    })
}
