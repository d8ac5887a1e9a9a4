//! C ABI over `elastocontact`.
//!
//! Objects are opaque handles created by `ec_*_new`/`ec_*_from_*` and released
//! by the matching `ec_*_free`. Every fallible call returns an [`EcStatus`];
//! on failure [`ec_last_error_message`] describes the error on the calling
//! thread. Panics never cross the boundary; they surface as
//! [`EcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use elastocontact::cli::RunConfig;
use elastocontact::constitutive::MaterialParams;
use elastocontact::interface::{build_background, BackgroundState};
use elastocontact::solver::{RunOutput, Solver};
use elastocontact::stability::{self, Classification, Stretches, StabilityVerdict};
use elastocontact::Error;

/// Result of every fallible call. Positive values mirror the library error
/// kinds; negative values are boundary errors.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcStatus {
    Ok = 0,
    NonOrientationPreserving = 1,
    InvalidDensity = 2,
    InvalidParameter = 3,
    DegenerateLift = 4,
    DegenerateF1N = 5,
    MassFluxNonzero = 6,
    MultiplicityMismatch = 7,
    ConstraintViolated = 8,
    SingularMinor = 9,
    NegativeTargetPressure = 10,
    BoundarySolveSingular = 11,
    PreconditionResidualTooLarge = 12,
    InsufficientHistory = 13,
    CflViolation = 14,
    NanDetected = 15,
    Unsupported = 16,
    Config = 17,
    Io = 18,
    NullPointer = -1,
    InvalidUtf8 = -2,
    BufferTooSmall = -3,
    /// The handle is in the wrong state for this call.
    InvalidState = -4,
    Panic = -5,
}

impl From<&Error> for EcStatus {
    fn from(e: &Error) -> Self {
        use EcStatus::*;
        match e.code() {
            1 => NonOrientationPreserving,
            2 => InvalidDensity,
            3 => InvalidParameter,
            4 => DegenerateLift,
            5 => DegenerateF1N,
            6 => MassFluxNonzero,
            7 => MultiplicityMismatch,
            8 => ConstraintViolated,
            9 => SingularMinor,
            10 => NegativeTargetPressure,
            11 => BoundarySolveSingular,
            12 => PreconditionResidualTooLarge,
            13 => InsufficientHistory,
            14 => CflViolation,
            15 => NanDetected,
            16 => Unsupported,
            17 => Config,
            _ => Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EcStatus, msg: impl Into<String>) -> EcStatus {
    set_error(msg.into());
    status
}

fn guard<F: FnOnce() -> Result<(), EcStatus>>(f: F) -> EcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EcStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(EcStatus::Panic, msg)
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, EcStatus>;
}

impl<T> OrStatus<T> for elastocontact::Result<T> {
    fn or_status(self) -> Result<T, EcStatus> {
        self.map_err(|e| fail(EcStatus::from(&e), e.to_string()))
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, EcStatus> {
    p.as_ref().ok_or_else(|| fail(EcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, EcStatus> {
    p.as_mut().ok_or_else(|| fail(EcStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_slice(src: &[f64], out: *mut f64, len: usize, written: *mut usize) -> Result<(), EcStatus> {
    if let Some(w) = written.as_mut() {
        *w = src.len();
    }
    if len < src.len() {
        return Err(fail(EcStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", src.len())));
    }
    if out.is_null() {
        return Err(fail(EcStatus::NullPointer, "output buffer is null"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `ec_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ec_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Material parameters.
pub struct EcMaterial(MaterialParams);

/// Gamma-law material with unit elastic coefficients in dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ec_material_gamma_law(dim: usize, gamma: f64, out: *mut *mut EcMaterial) -> EcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = MaterialParams::gamma_law(dim, gamma).or_status()?;
        *out = Box::into_raw(Box::new(EcMaterial(p)));
        Ok(())
    })
}

/// Number of unknowns `d^2 + d + 2`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle from [`ec_material_gamma_law`].
#[no_mangle]
pub unsafe extern "C" fn ec_material_n_unknowns(m: *const EcMaterial) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_unknowns())
}

/// # Safety
/// `m` must be null or a handle from [`ec_material_gamma_law`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ec_material_free(m: *mut EcMaterial) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Background state on both sides of a planar front at rest.
pub struct EcBackground {
    bg: BackgroundState,
    params: MaterialParams,
}

/// Build the background from the plus-side stretches `f_plus[0..3]`, the
/// minus-side normal stretch and the plus-side entropy.
///
/// # Safety
/// `m` must be a live material handle, `f_plus` must point to 3 readable
/// doubles and `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn ec_background_new(
    m: *const EcMaterial,
    f_plus: *const f64,
    f11_minus: f64,
    s_plus: f64,
    out: *mut *mut EcBackground,
) -> EcStatus {
    guard(|| {
        let m = deref(m, "material")?;
        let out = deref_mut(out, "out")?;
        if f_plus.is_null() {
            return Err(fail(EcStatus::NullPointer, "f_plus is null"));
        }
        let fp = [*f_plus, *f_plus.add(1), *f_plus.add(2)];
        let bg = build_background(fp, f11_minus, s_plus, &m.0).or_status()?;
        *out = Box::into_raw(Box::new(EcBackground { bg, params: m.0.clone() }));
        Ok(())
    })
}

/// Write the state `(p, v, F column-major, S)` of side `sign` (+1 or -1)
/// into `out`. `written` (optional) receives the required length.
///
/// # Safety
/// `bg` must be a live handle; `out` must hold `len` writable doubles;
/// `written` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ec_background_state(
    bg: *const EcBackground,
    sign: i32,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> EcStatus {
    guard(|| {
        let bg = deref(bg, "background")?;
        if sign != 1 && sign != -1 {
            return Err(fail(EcStatus::InvalidParameter, format!("side must be +1 or -1, got {sign}")));
        }
        let u = bg.bg.state(f64::from(sign)).to_vec();
        debug_assert_eq!(u.len(), bg.params.n_unknowns());
        write_slice(&u, out, len, written)
    })
}

/// # Safety
/// `bg` must be null or a handle from [`ec_background_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ec_background_free(bg: *mut EcBackground) {
    if !bg.is_null() {
        drop(Box::from_raw(bg));
    }
}

/// Classification of the stability inequality.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcClassification {
    Satisfied = 0,
    NotSatisfied = 1,
    /// Equality; not satisfied.
    Boundary = 2,
}

/// Stability verdict. `lhs = [F_11] / F_11^+`; the condition holds when
/// `lhs < rhs`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcStability {
    pub dim: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
    pub classification: EcClassification,
}

impl From<&StabilityVerdict> for EcStability {
    fn from(v: &StabilityVerdict) -> Self {
        let classification = match v.classification {
            Classification::Satisfied => EcClassification::Satisfied,
            Classification::NotSatisfied => EcClassification::NotSatisfied,
            Classification::Boundary => EcClassification::Boundary,
        };
        EcStability { dim: v.dim, lhs: v.lhs, rhs: v.rhs, margin: v.margin, satisfied: v.satisfied, classification }
    }
}

/// Evaluate the stability condition for the given stretches (`f33` is
/// ignored for `dim = 2`).
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ec_stability_evaluate(
    dim: usize,
    f11_plus: f64,
    f11_minus: f64,
    f22: f64,
    f33: f64,
    out: *mut EcStability,
) -> EcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let st = Stretches { dim, f11_plus, f11_minus, f22, f33: if dim == 2 { 1.0 } else { f33 } };
        *out = (&stability::evaluate_stretches(&st).or_status()?).into();
        Ok(())
    })
}

/// Stability condition at a background.
///
/// # Safety
/// `bg` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn ec_background_stability(bg: *const EcBackground, out: *mut EcStability) -> EcStatus {
    guard(|| {
        let bg = deref(bg, "background")?;
        let out = deref_mut(out, "out")?;
        *out = (&stability::evaluate(&bg.bg).or_status()?).into();
        Ok(())
    })
}

/// A configured linearized run; holds its results after [`ec_simulation_run`].
pub struct EcSimulation {
    solver: Option<Solver>,
    output: Option<RunOutput>,
}

/// Run summary. `ratio` is NaN when both source norms vanish.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EcRunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub vdot_norm: f64,
    pub psi_norm: f64,
    pub f_norm: f64,
    pub g_norm: f64,
    pub ratio: f64,
    pub front_residual_max: f64,
    pub e_tan_gap_max: f64,
}

/// Configure a run from TOML text in the command-line configuration format.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn ec_simulation_from_toml(toml: *const c_char, out: *mut *mut EcSimulation) -> EcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        if toml.is_null() {
            return Err(fail(EcStatus::NullPointer, "toml is null"));
        }
        let text = CStr::from_ptr(toml).to_str().map_err(|e| fail(EcStatus::InvalidUtf8, e.to_string()))?;
        let cfg = RunConfig::from_toml(text).or_status()?;
        let solver = Solver::new(cfg.run_setup().or_status()?).or_status()?;
        *out = Box::into_raw(Box::new(EcSimulation { solver: Some(solver), output: None }));
        Ok(())
    })
}

/// Number of tangential boundary nodes, or 0 for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ec_simulation_boundary_nodes(sim: *const EcSimulation) -> usize {
    sim.as_ref()
        .and_then(|s| s.solver.as_ref().map(|v| v.grid.n_tan_total()).or(s.output.as_ref().map(|o| o.psi.len())))
        .unwrap_or(0)
}

/// Run to the final time. A handle runs once; a second call returns
/// [`EcStatus::InvalidState`].
///
/// # Safety
/// `sim` must be a live handle; `summary` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ec_simulation_run(sim: *mut EcSimulation, summary: *mut EcRunSummary) -> EcStatus {
    guard(|| {
        let sim = deref_mut(sim, "simulation")?;
        let solver = sim.solver.take().ok_or_else(|| fail(EcStatus::InvalidState, "simulation already ran"))?;
        let out = solver.run().or_status()?;
        if let Some(dst) = summary.as_mut() {
            *dst = summarize(&out);
        }
        sim.output = Some(out);
        Ok(())
    })
}

fn summarize(o: &RunOutput) -> EcRunSummary {
    let s = &o.summary;
    EcRunSummary {
        steps: s.steps,
        dt: s.dt,
        t_final: s.t_final,
        vdot_norm: s.vdot_norm,
        psi_norm: s.psi_norm,
        f_norm: s.f_norm,
        g_norm: s.g_norm,
        ratio: s.ratio.unwrap_or(f64::NAN),
        front_residual_max: s.front_residual_max,
        e_tan_gap_max: s.e_tan_gap_max,
    }
}

/// Front displacement `psi` at the final time, one value per boundary node.
///
/// # Safety
/// `sim` must be a live handle that has run; `out` must hold `len` writable
/// doubles; `written` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ec_simulation_psi(
    sim: *const EcSimulation,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> EcStatus {
    guard(|| {
        let sim = deref(sim, "simulation")?;
        let o = sim.output.as_ref().ok_or_else(|| fail(EcStatus::InvalidState, "simulation has not run"))?;
        write_slice(&o.psi, out, len, written)
    })
}

/// # Safety
/// `sim` must be null or a handle from [`ec_simulation_from_toml`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ec_simulation_free(sim: *mut EcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
