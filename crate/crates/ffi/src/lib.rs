//! C ABI for hklab.
//!
//! Objects are opaque handles created by the builder functions and
//! released with the matching `hk_*_free`. Every fallible call returns an
//! [`HkStatus`]; on failure `hk_last_error` holds a message for the calling
//! thread. Results are written through out-pointers. Panics never cross the
//! boundary: they are reported as `HK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use hklab::counterexample::{
    build_counterexample_field, synthesize_config, synthesize_config_with_xi,
};
use hklab::semigroup::recursion_limit;
use hklab::{FiniteMMSpace, JumpKernel, LabError, ScaleField, SpectralForm};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    PointCap = 3,
    UnknownPoint = 4,
    WrongSpace = 5,
    AsymmetricKernel = 6,
    NoConvergence = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Internal = 10,
}

/// Finite metric measure space.
pub struct HkSpace(FiniteMMSpace);

/// Scale function `phi(x, r)`.
pub struct HkScale(ScaleField);

/// Symmetric jump kernel.
pub struct HkKernel(JumpKernel);

/// Assembled form with its spectral decomposition.
pub struct HkForm(SpectralForm);

/// Counterexample parameters as plain data.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HkCounterexampleConfig {
    pub epsilon: f64,
    pub xi: f64,
    pub n: usize,
    pub alpha_xi: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub nu: f64,
    pub level: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Lab(LabError),
    Null(&'static str),
    Buffer { needed: usize, given: usize },
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        Failure::Lab(e)
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &LabError) -> HkStatus {
    match e {
        LabError::Parameter(_) | LabError::EmptyDomain | LabError::DegenerateGrid(_) => {
            HkStatus::InvalidParameter
        }
        LabError::PointCap { .. } => HkStatus::PointCap,
        LabError::UnknownPoint { .. } => HkStatus::UnknownPoint,
        LabError::WrongSpace { .. } => HkStatus::WrongSpace,
        LabError::AsymmetricKernel { .. } => HkStatus::AsymmetricKernel,
        LabError::NoConvergence { .. } => HkStatus::NoConvergence,
        _ => HkStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HkStatus::Ok
        }
        Ok(Err(Failure::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            HkStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, given })) => {
            set_error(format!(
                "buffer holds {given} values but {needed} are needed"
            ));
            HkStatus::BufferTooSmall
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HkStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn put<T>(out: *mut T, name: &'static str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    put(out, "out", Box::into_raw(Box::new(value)))
}

unsafe fn read_slice<'a>(
    p: *const f64,
    len: usize,
    name: &'static str,
) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next hklab call on the same thread.
#[no_mangle]
pub extern "C" fn hk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Cantor product `C_xi^axes` at per-axis depth `level`, refused above `cap` points.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hk_space_cantor(
    xi: f64,
    axes: usize,
    level: u32,
    cap: usize,
    out: *mut *mut HkSpace,
) -> HkStatus {
    guard(|| {
        put_handle(
            out,
            HkSpace(FiniteMMSpace::cantor_product(xi, axes, level, cap)?),
        )
    })
}

/// Uniform `side^dim` grid on `[0,1]^dim` with the sup metric.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hk_space_grid(
    dim: usize,
    side: usize,
    cap: usize,
    out: *mut *mut HkSpace,
) -> HkStatus {
    guard(|| put_handle(out, HkSpace(FiniteMMSpace::grid(dim, side, cap)?)))
}

/// Two atoms of mass 1/2 at distance `gap`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hk_space_two_point(gap: f64, out: *mut *mut HkSpace) -> HkStatus {
    guard(|| put_handle(out, HkSpace(FiniteMMSpace::two_point(gap)?)))
}

/// Number of points, or 0 for NULL.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hk_space_len(space: *const HkSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.len())
}

/// Measure of the open ball `B(x, r)`.
///
/// # Safety
/// `space` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_space_volume(
    space: *const HkSpace,
    x: usize,
    r: f64,
    out: *mut f64,
) -> HkStatus {
    guard(|| {
        let s = &get(space, "space")?.0;
        s.check_point(x)?;
        put(out, "out", s.volume(x, r))
    })
}

/// # Safety
/// `space` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hk_space_free(space: *mut HkSpace) {
    free(space)
}

/// Constant exponent `beta` on `n` points.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hk_scale_constant(
    n: usize,
    beta: f64,
    t0: f64,
    out: *mut *mut HkScale,
) -> HkStatus {
    guard(|| put_handle(out, HkScale(ScaleField::constant(n, beta, t0)?)))
}

/// Exponent table `beta[0..n]` with declared bounds `beta1 <= beta <= beta2`.
///
/// # Safety
/// `beta` must point to `n` readable values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hk_scale_from_table(
    beta: *const f64,
    n: usize,
    beta1: f64,
    beta2: f64,
    t0: f64,
    out: *mut *mut HkScale,
) -> HkStatus {
    guard(|| {
        let values = read_slice(beta, n, "beta")?.to_vec();
        put_handle(
            out,
            HkScale(ScaleField::from_table(values, beta1, beta2, t0)?),
        )
    })
}

/// Counterexample exponent field on a Cantor product. Pass `xi = NAN` for
/// the default ratio.
///
/// # Safety
/// `space` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_scale_counterexample(
    space: *const HkSpace,
    epsilon: f64,
    xi: f64,
    t0: f64,
    out: *mut *mut HkScale,
) -> HkStatus {
    guard(|| {
        let s = &get(space, "space")?.0;
        let config = if xi.is_nan() {
            synthesize_config(epsilon)?
        } else {
            synthesize_config_with_xi(epsilon, xi)?
        };
        put_handle(
            out,
            HkScale(build_counterexample_field(&config, s, t0)?.scale),
        )
    })
}

/// `phi(x, r)`.
///
/// # Safety
/// `scale` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_scale_phi(
    scale: *const HkScale,
    x: usize,
    r: f64,
    out: *mut f64,
) -> HkStatus {
    guard(|| {
        let value = get(scale, "scale")?.0.checked_phi(x, r)?;
        put(out, "out", value)
    })
}

/// # Safety
/// `scale` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hk_scale_free(scale: *mut HkScale) {
    free(scale)
}

/// `j(x, y) = c` for all `x != y`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hk_kernel_constant(n: usize, c: f64, out: *mut *mut HkKernel) -> HkStatus {
    guard(|| put_handle(out, HkKernel(JumpKernel::constant(n, c)?)))
}

/// Jumps along one Cantor axis at a time.
///
/// # Safety
/// `space` and `scale` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_kernel_cantor_axis(
    space: *const HkSpace,
    scale: *const HkScale,
    out: *mut *mut HkKernel,
) -> HkStatus {
    guard(|| {
        let k = JumpKernel::cantor_axis(&get(space, "space")?.0, &get(scale, "scale")?.0)?;
        put_handle(out, HkKernel(k))
    })
}

/// Stable-like kernel `c / (V(x, d) phi(x, d))` symmetrized, `d = d(x, y)`. Grids only.
///
/// # Safety
/// `space` and `scale` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_kernel_stable_like(
    space: *const HkSpace,
    scale: *const HkScale,
    c: f64,
    out: *mut *mut HkKernel,
) -> HkStatus {
    guard(|| {
        let k = JumpKernel::stable_like(&get(space, "space")?.0, &get(scale, "scale")?.0, c)?;
        put_handle(out, HkKernel(k))
    })
}

/// Tail mass `J(x, B(x, r)^c)`.
///
/// # Safety
/// `kernel` and `space` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_kernel_tail_mass(
    kernel: *const HkKernel,
    space: *const HkSpace,
    x: usize,
    r: f64,
    out: *mut f64,
) -> HkStatus {
    guard(|| {
        let k = &get(kernel, "kernel")?.0;
        let s = &get(space, "space")?.0;
        s.check_point(x)?;
        if k.len() != s.len() {
            return Err(LabError::Parameter(format!(
                "kernel has {} points, space {}",
                k.len(),
                s.len()
            ))
            .into());
        }
        put(out, "out", k.tail_mass(s, x, r))
    })
}

/// # Safety
/// `kernel` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hk_kernel_free(kernel: *mut HkKernel) {
    free(kernel)
}

/// Jump tail check over all points and `radii`. Writes the best constant
/// and whether it stays within `threshold`.
///
/// # Safety
/// Handles must be live, `radii` must point to `count` values, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn hk_tj_check(
    kernel: *const HkKernel,
    space: *const HkSpace,
    scale: *const HkScale,
    radii: *const f64,
    count: usize,
    threshold: f64,
    best_constant: *mut f64,
    passed: *mut bool,
) -> HkStatus {
    guard(|| {
        let radii = read_slice(radii, count, "radii")?;
        let report = hklab::kernel::tj_check(
            &get(kernel, "kernel")?.0,
            &get(space, "space")?.0,
            &get(scale, "scale")?.0,
            radii,
            threshold,
        )?;
        put(best_constant, "best_constant", report.best_constant)?;
        put(passed, "passed", report.passed())
    })
}

/// Assembles the generator and its eigendecomposition.
///
/// # Safety
/// `space` and `kernel` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_form_assemble(
    space: *const HkSpace,
    kernel: *const HkKernel,
    out: *mut *mut HkForm,
) -> HkStatus {
    guard(|| {
        let form = SpectralForm::assemble(&get(space, "space")?.0, &get(kernel, "kernel")?.0)?;
        put_handle(out, HkForm(form))
    })
}

/// Number of points of the form's domain, or 0 for NULL.
///
/// # Safety
/// `form` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hk_form_size(form: *const HkForm) -> usize {
    form.as_ref().map_or(0, |f| f.0.size())
}

/// Bottom of the spectrum.
///
/// # Safety
/// `form` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hk_form_lambda1(form: *const HkForm, out: *mut f64) -> HkStatus {
    guard(|| put(out, "out", get(form, "form")?.0.lambda1()))
}

/// Heat kernel `p_t(x, y)` with respect to the measure, row-major into
/// `buffer`, which must hold `size * size` values.
///
/// # Safety
/// `form` must be a live handle and `buffer` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn hk_form_heat_kernel(
    form: *const HkForm,
    t: f64,
    buffer: *mut f64,
    len: usize,
) -> HkStatus {
    guard(|| {
        let f = &get(form, "form")?.0;
        let n = f.size();
        if len < n * n {
            return Err(Failure::Buffer {
                needed: n * n,
                given: len,
            });
        }
        if buffer.is_null() {
            return Err(Failure::Null("buffer"));
        }
        let p = hklab::semigroup::heat_kernel(f, t)?;
        let dst = slice::from_raw_parts_mut(buffer, n * n);
        for x in 0..n {
            for y in 0..n {
                dst[x * n + y] = p[(x, y)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `form` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hk_form_free(form: *mut HkForm) {
    free(form)
}

/// Counterexample parameters for `epsilon`. Pass `xi = NAN` for the default ratio.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hk_counterexample_synthesize(
    epsilon: f64,
    xi: f64,
    out: *mut HkCounterexampleConfig,
) -> HkStatus {
    guard(|| {
        let c = if xi.is_nan() {
            synthesize_config(epsilon)?
        } else {
            synthesize_config_with_xi(epsilon, xi)?
        };
        put(
            out,
            "out",
            HkCounterexampleConfig {
                epsilon: c.epsilon,
                xi: c.xi,
                n: c.n,
                alpha_xi: c.alpha_xi,
                beta1: c.beta1,
                beta2: c.beta2,
                gamma: c.gamma,
                nu: c.nu,
                level: c.level,
            },
        )
    })
}

/// Limit of `p_{k+1} = q + a (q p_k)^(1/2) + b p_k` from `p0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hk_recursion_limit(
    q: f64,
    a: f64,
    b: f64,
    p0: f64,
    tol: f64,
    out: *mut f64,
) -> HkStatus {
    guard(|| put(out, "out", recursion_limit(q, a, b, p0, tol)?))
}
