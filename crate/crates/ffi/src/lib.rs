//! C interface to `cbdnk`.
//!
//! Every fallible function returns a [`CbdnkStatus`]. On failure a message is
//! stored per thread and can be read with [`cbdnk_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cbdnk::characteristics::{check_causality, rest_frame_speeds};
use cbdnk::evolve::{DataField, EvolveConfig, Evolver, InitialData, InitialSpec, Mode};
use cbdnk::grid::TorusGrid;
use cbdnk::state::{TransportModel, ViscosityLaw, PSI_LEN};
use cbdnk::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbdnkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InadmissibleModel = 3,
    NumericalFailure = 4,
    MonitorTripped = 5,
    BufferTooSmall = 6,
    Finished = 7,
    Panic = 8,
}

/// Transport model handle.
pub struct CbdnkModel(TransportModel);

/// Evolution handle.
pub struct CbdnkEvolver(Evolver);

/// Field perturbed by a [`CbdnkMode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbdnkField {
    Eps = 0,
    EpsDot = 1,
    U1 = 2,
    U2 = 3,
    U3 = 4,
    UDot1 = 5,
    UDot2 = 6,
    UDot3 = 7,
}

/// `amplitude * sin(k . x + phase)` added to one field.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CbdnkMode {
    pub field: CbdnkField,
    pub k: [i64; 3],
    pub amplitude: f64,
    pub phase: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CbdnkEvolveOptions {
    /// Points per side, a power of two and at least 8.
    pub n: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub dealias: bool,
    /// Background energy density.
    pub eps: f64,
    /// Background spatial velocity.
    pub u: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CbdnkCausality {
    pub admissible: bool,
    pub chi_exceeds_four_eta: bool,
    pub lambda_bound_holds: bool,
    pub max_speed_ratio: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> CbdnkStatus {
    match e {
        Error::InadmissibleModel(_) => CbdnkStatus::InadmissibleModel,
        Error::ConstraintDrift { .. }
        | Error::DensityFloorViolated { .. }
        | Error::Runaway { .. }
        | Error::NonFiniteState { .. }
        | Error::NearSingularA0 { .. } => CbdnkStatus::MonitorTripped,
        Error::Config(_) | Error::InvalidGrid(_) | Error::NotUnitTimelike { .. } | Error::NonPositiveDensity(_) => {
            CbdnkStatus::InvalidArgument
        }
        _ => CbdnkStatus::NumericalFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CbdnkStatus, String)>) -> CbdnkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbdnkStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CbdnkStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CbdnkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (CbdnkStatus, String) {
    (CbdnkStatus::NullPointer, format!("{name} is null"))
}

/// Copies the last error message of this thread into `buf` with a trailing NUL.
///
/// Returns the buffer size needed for the full message, or 0 if there is none.
/// The message is truncated when `cap` is too small.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let len = bytes.len().min(cap) - 1;
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, len);
            *buf.add(len) = 0;
        }
        bytes.len()
    })
}

/// Creates a model with `eta = eta0 * theta^3`. Inadmissible parameters are rejected.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_model_new(
    eps0: f64,
    eta0: f64,
    a1: f64,
    a2: f64,
    out: *mut *mut CbdnkModel,
) -> CbdnkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = TransportModel::conformal(eps0, eta0, a1, a2).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CbdnkModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`cbdnk_model_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_model_free(model: *mut CbdnkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Causality conditions for `(a1, a2)`. Works for inadmissible pairs too.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_check_causality(a1: f64, a2: f64, out: *mut CbdnkCausality) -> CbdnkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(a1.is_finite() && a2.is_finite() && a1 > 0.0 && a2 > 0.0) {
            return Err((CbdnkStatus::InvalidArgument, format!("a1 = {a1}, a2 = {a2} must be positive")));
        }
        let r = check_causality(&TransportModel::unchecked(1.0, a1, a2, ViscosityLaw::conformal(1.0)));
        *out = CbdnkCausality {
            admissible: r.admissible,
            chi_exceeds_four_eta: r.chi_exceeds_four_eta,
            lambda_bound_holds: r.lambda_bound_holds,
            max_speed_ratio: r.max_speed_ratio,
        };
        Ok(())
    })
}

/// Writes the five distinct rest-frame speeds in ascending order.
///
/// # Safety
/// `model` must be a live handle and `out` must point to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_rest_frame_speeds(model: *const CbdnkModel, out: *mut f64) -> CbdnkStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = rest_frame_speeds(&model.0).map_err(lib_err)?;
        ptr::copy_nonoverlapping(v.as_ptr(), out, v.len().min(5));
        Ok(())
    })
}

fn field(f: CbdnkField) -> DataField {
    match f {
        CbdnkField::Eps => DataField::Eps,
        CbdnkField::EpsDot => DataField::EpsDot,
        CbdnkField::U1 => DataField::U1,
        CbdnkField::U2 => DataField::U2,
        CbdnkField::U3 => DataField::U3,
        CbdnkField::UDot1 => DataField::UDot1,
        CbdnkField::UDot2 => DataField::UDot2,
        CbdnkField::UDot3 => DataField::UDot3,
    }
}

/// Sets up an evolution from a uniform background plus `mode_count` modes.
///
/// # Safety
/// `model` must be a live handle, `options` and `out` valid pointers, and
/// `modes` must point to `mode_count` entries (or be null when it is 0).
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_new(
    model: *const CbdnkModel,
    options: *const CbdnkEvolveOptions,
    modes: *const CbdnkMode,
    mode_count: usize,
    out: *mut *mut CbdnkEvolver,
) -> CbdnkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let opts = options.as_ref().ok_or_else(|| null("options"))?;
        if !(opts.eps > 0.0 && opts.eps.is_finite()) {
            return Err((CbdnkStatus::InvalidArgument, format!("background eps = {} must be positive", opts.eps)));
        }
        if modes.is_null() && mode_count > 0 {
            return Err(null("modes"));
        }
        let modes = if mode_count == 0 { &[][..] } else { std::slice::from_raw_parts(modes, mode_count) };
        let spec = InitialSpec {
            eps: Some(opts.eps),
            u: opts.u,
            modes: modes
                .iter()
                .map(|m| Mode { field: field(m.field), k: m.k, amplitude: m.amplitude, phase: m.phase })
                .collect(),
            ..Default::default()
        };
        let config = EvolveConfig {
            n: opts.n,
            cfl: opts.cfl,
            t_end: opts.t_end,
            dealias: opts.dealias,
            store_snapshots: false,
            a0_diagnostics: false,
            ..Default::default()
        };
        config.validate().map_err(lib_err)?;
        let grid = TorusGrid::new(opts.n).map_err(lib_err)?;
        let data = InitialData::from_spec(&grid, &spec, &model.0);
        let ev = Evolver::new(&data, &model.0, &config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CbdnkEvolver(ev)));
        Ok(())
    })
}

/// # Safety
/// `ev` must be null or come from [`cbdnk_evolver_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_free(ev: *mut CbdnkEvolver) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Advances one step. Returns `Finished` once the end time was reached.
///
/// # Safety
/// `ev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_step(ev: *mut CbdnkEvolver) -> CbdnkStatus {
    guard(|| {
        let ev = ev.as_mut().ok_or_else(|| null("evolver"))?;
        if ev.0.is_done() {
            return Err((CbdnkStatus::Finished, "evolution already reached t_end".into()));
        }
        ev.0.step().map_err(lib_err)
    })
}

/// Current time, or NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_time(ev: *const CbdnkEvolver) -> f64 {
    ev.as_ref().map_or(f64::NAN, |e| e.0.time())
}

/// Step size, or NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_dt(ev: *const CbdnkEvolver) -> f64 {
    ev.as_ref().map_or(f64::NAN, |e| e.0.dt())
}

/// Steps left before `t_end`, or 0 for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_remaining_steps(ev: *const CbdnkEvolver) -> usize {
    ev.as_ref().map_or(0, |e| e.0.total_steps() - e.0.steps_taken())
}

/// Number of doubles in the state: `30 * n^3`, component-major with `i` fastest.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_state_len(ev: *const CbdnkEvolver) -> usize {
    ev.as_ref().map_or(0, |e| e.0.state().data.len())
}

/// Copies the state into `buf`.
///
/// # Safety
/// `ev` must be a live handle and `buf` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cbdnk_evolver_copy_state(ev: *const CbdnkEvolver, buf: *mut f64, cap: usize) -> CbdnkStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evolver"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let data = &ev.0.state().data;
        if cap < data.len() {
            return Err((CbdnkStatus::BufferTooSmall, format!("need {} doubles, got {cap}", data.len())));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Number of state components per grid point.
#[no_mangle]
pub extern "C" fn cbdnk_components() -> usize {
    PSI_LEN
}
