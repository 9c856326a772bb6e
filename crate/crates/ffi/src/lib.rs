//! C interface to the coupling toolkit.
//!
//! Every fallible function returns a [`GracStatus`]; on failure a message is
//! available from [`grac_last_error`] on the same thread. Models are opaque
//! handles created by [`grac_model_new`] and released by [`grac_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use grac::bench::{fit_slope, solve_coefficients, Fit};
use grac::consistency::retarget;
use grac::energy::{AcFunctional, HybridState};
use grac::geometry::{AcGeometry, CouplingMethod};
use grac::lattice::{LatticeBasis, Mat2, ReferenceConfig, Stencil};
use grac::potential::{find_f0, EamParams};
use grac::solve::{min_eigenvalue, minimize, SolverConfig};
use grac::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GracStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    InvalidArgument = 2,
    /// The requested discretisation cannot be built.
    Config = 3,
    /// The consistency equations have no solution.
    Infeasible = 4,
    NotConverged = 5,
    /// A deformation collapsed a bond.
    Singular = 6,
    Io = 7,
    Internal = 8,
}

/// How interface coefficients are chosen.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GracFit {
    /// Unmodified site energies (has ghost forces).
    Identity = 0,
    /// ℓ¹-minimal consistent coefficients.
    L1 = 1,
    /// Minimum-norm consistent coefficients.
    L2 = 2,
}

/// A coupled model together with its last equilibrium.
pub struct GracModel {
    geom: AcGeometry,
    model: AcFunctional,
    twin_model: AcFunctional,
    state: Option<HybridState>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> GracStatus {
    match e {
        Error::Config(_) | Error::Mesh(_) | Error::Geometry { .. } | Error::MissingNeighbor { .. } => {
            GracStatus::Config
        }
        Error::Infeasible { .. } => GracStatus::Infeasible,
        Error::NonConvergence { .. } | Error::Eigen(_) => GracStatus::NotConverged,
        Error::Singular { .. } => GracStatus::Singular,
        Error::InsufficientData(_) => GracStatus::InvalidArgument,
        Error::Io { .. } => GracStatus::Io,
        Error::Interpolation { .. } | Error::Internal(_) => GracStatus::Internal,
    }
}

struct Failure(GracStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(GracStatus::InvalidArgument, msg.to_string())
}

fn null(name: &str) -> Failure {
    Failure(GracStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GracStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GracStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GracStatus::Internal
        }
    }
}

/// Reads a row-major 2×2 matrix.
///
/// # Safety
/// `m` must be null or point to four readable doubles.
unsafe fn read_mat(m: *const f64, name: &str) -> Result<Mat2, Failure> {
    if m.is_null() {
        return Err(null(name));
    }
    let v = std::slice::from_raw_parts(m, 4);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix entries must be finite"));
    }
    Ok(Mat2::new(v[0], v[1], v[2], v[3]))
}

fn model_ref<'a>(model: *const GracModel) -> Result<&'a GracModel, Failure> {
    // SAFETY: handles come from `grac_model_new` and are not freed while in use.
    unsafe { model.as_ref() }.ok_or_else(|| null("model"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn grac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ground-state lattice stretch `α*` (so `F₀ = α* I`) for the default
/// potential and the given hop radius.
///
/// # Safety
/// `alpha` must be null or point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn grac_ground_state(hop_radius: u32, alpha: *mut f64) -> GracStatus {
    guard(|| {
        let out = unsafe { alpha.as_mut() }.ok_or_else(|| null("alpha"))?;
        let stencil = Stencil::new(hop_radius)?;
        let f0 = find_f0(&stencil, &LatticeBasis::triangular(), &EamParams::default())?;
        *out = f0[(0, 0)];
        Ok(())
    })
}

/// Builds a coupled model around a row of `defect_size` vacancies with
/// atomistic radius `k_atom`, `k_atom²` layers in total, interaction range
/// `hop_radius`, coupling method 1 or 2, coefficient fit `fit` and
/// stabilisation `kappa`. Fitting may take seconds for larger `k_atom`.
///
/// # Safety
/// `out` must be null or point to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn grac_model_new(
    defect_size: u32,
    k_atom: u32,
    hop_radius: u32,
    coupling: u32,
    fit: GracFit,
    kappa: f64,
    out: *mut *mut GracModel,
) -> GracStatus {
    guard(|| {
        let out = unsafe { out.as_mut() }.ok_or_else(|| null("out"))?;
        *out = std::ptr::null_mut();
        let coupling = match coupling {
            1 => CouplingMethod::M1,
            2 => CouplingMethod::M2,
            _ => return Err(invalid("coupling must be 1 or 2")),
        };
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(invalid("kappa must be finite and non-negative"));
        }
        let fit = match fit {
            GracFit::Identity => Fit::Qce,
            GracFit::L1 => Fit::L1,
            GracFit::L2 => Fit::L2,
        };
        let stencil = Stencil::new(hop_radius)?;
        let layers = k_atom.checked_mul(k_atom).ok_or_else(|| invalid("k_atom too large"))?;
        let config = ReferenceConfig::build(defect_size as usize, layers)?;
        let geom = AcGeometry::build(config, k_atom, stencil)?;
        let twin = geom.defect_free()?;
        let c = solve_coefficients(&geom, coupling, fit)?;
        let params = EamParams::default();
        let model = AcFunctional::coupled(&geom, &c.volumes, &c.coeffs, kappa, params)?;
        let twin_model = AcFunctional::coupled(&twin, &c.volumes, &retarget(&c.coeffs, &twin), kappa, params)?;
        let handle = GracModel { geom, model, twin_model, state: None };
        *out = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`grac_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grac_model_free(model: *mut GracModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of degrees of freedom (lattice sites and mesh nodes).
///
/// # Safety
/// `n` must be null or point to a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn grac_model_num_dofs(model: *const GracModel, n: *mut usize) -> GracStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = unsafe { n.as_mut() }.ok_or_else(|| null("n"))?;
        *out = m.geom.dofs.len();
        Ok(())
    })
}

/// Largest ghost force of the model's defect-free twin under the uniform
/// deformation `f` (row-major 2×2).
///
/// # Safety
/// `f` must point to four doubles and `max_force` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn grac_model_ghost_force(
    model: *const GracModel,
    f: *const f64,
    max_force: *mut f64,
) -> GracStatus {
    guard(|| {
        let m = model_ref(model)?;
        let f = unsafe { read_mat(f, "f") }?;
        let out = unsafe { max_force.as_mut() }.ok_or_else(|| null("max_force"))?;
        *out = m.twin_model.ghost_force(&f)?.max;
        Ok(())
    })
}

/// Minimises the energy with far-field deformation `b` (row-major 2×2)
/// until the largest gradient component is below `grad_tol`. Writes the
/// energy relative to `y = Bx` and, if `positions` is not null, the
/// deformed positions as `2 · num_dofs` doubles.
///
/// # Safety
/// `b` must point to four doubles, `energy` to a writable double, and
/// `positions` must be null or hold `2 · num_dofs` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn grac_model_minimize(
    model: *mut GracModel,
    b: *const f64,
    grad_tol: f64,
    energy: *mut f64,
    positions: *mut f64,
) -> GracStatus {
    guard(|| {
        // SAFETY: see `model_ref`.
        let m = unsafe { model.as_mut() }.ok_or_else(|| null("model"))?;
        let b = unsafe { read_mat(b, "b") }?;
        let out = unsafe { energy.as_mut() }.ok_or_else(|| null("energy"))?;
        if grad_tol.is_nan() || grad_tol <= 0.0 {
            return Err(invalid("grad_tol must be positive"));
        }
        let x0 = m.model.affine_state(&b);
        let cfg = SolverConfig { grad_tol, ..SolverConfig::default() };
        let (y, _) = minimize(&m.model, &x0, &cfg)?;
        *out = m.model.energy(&y, &x0)?;
        if !positions.is_null() {
            let dst = unsafe { std::slice::from_raw_parts_mut(positions, 2 * y.values.len()) };
            for (d, v) in dst.chunks_exact_mut(2).zip(&y.values) {
                d[0] = v.x;
                d[1] = v.y;
            }
        }
        m.state = Some(y);
        Ok(())
    })
}

/// Smallest eigenvalue of the Hessian at the last equilibrium found by
/// [`grac_model_minimize`].
///
/// # Safety
/// `lambda` must be null or point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn grac_model_min_eigenvalue(model: *const GracModel, lambda: *mut f64) -> GracStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = unsafe { lambda.as_mut() }.ok_or_else(|| null("lambda"))?;
        let y = m.state.as_ref().ok_or_else(|| invalid("model has not been minimised"))?;
        *out = min_eigenvalue(&m.model.hessian(y)?)?;
        Ok(())
    })
}

/// Least-squares slope of `log err` against `log dof` over `n` points.
///
/// # Safety
/// `dof` and `err` must point to `n` doubles; `slope` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn grac_fit_slope(dof: *const f64, err: *const f64, n: usize, slope: *mut f64) -> GracStatus {
    guard(|| {
        if dof.is_null() || err.is_null() {
            return Err(null("dof/err"));
        }
        let out = unsafe { slope.as_mut() }.ok_or_else(|| null("slope"))?;
        let (x, y) = unsafe { (std::slice::from_raw_parts(dof, n), std::slice::from_raw_parts(err, n)) };
        let points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        *out = fit_slope(&points)?;
        Ok(())
    })
}
