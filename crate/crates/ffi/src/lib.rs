//! C interface to `trapgap`.
//!
//! Every function returns a [`TgStatus`]. On failure the message is available
//! through [`tg_last_error`] on the calling thread. Meshes and spectra are
//! opaque handles released with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trapgap::analytic::{self, Radicand, ScreenDesign, ScreenParams, TwoScreenInput};
use trapgap::capacity;
use trapgap::eigen::{self, EigenOptions};
use trapgap::fem::{self, BoundaryRegime, ScreenBc};
use trapgap::mesh::{self, CellGeometry, CellMesh};
use trapgap::Error;

/// Status codes; the numeric values of 2, 3 and 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    InvalidArgument = 2,
    NumericalFailure = 3,
    ConsistencyFailure = 4,
    NullPointer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Boundary condition on the cell's outer edges.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgOuter {
    Neumann = 0,
    Dirichlet = 1,
    Bloch = 2,
}

/// Opaque cell mesh.
pub struct TgMesh {
    inner: CellMesh,
}

/// Opaque eigenvalue list.
pub struct TgSpectrum {
    values: Vec<f64>,
    residuals: Vec<f64>,
    iterations: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TgStatus {
    match err.exit_code() {
        2 => TgStatus::InvalidArgument,
        4 => TgStatus::ConsistencyFailure,
        _ => TgStatus::NumericalFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), TgStatus>) -> TgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TgStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            TgStatus::Panic
        }
    }
}

fn check<T>(r: trapgap::Result<T>) -> Result<T, TgStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn out<T>(p: *mut T, value: T) -> Result<(), TgStatus> {
    if p.is_null() {
        set_error("null output pointer".into());
        return Err(TgStatus::NullPointer);
    }
    // SAFETY: non-null and, by contract, valid for writes.
    unsafe { p.write(value) };
    Ok(())
}

fn nonnull<'a, T>(p: *const T) -> Result<&'a T, TgStatus> {
    // SAFETY: by contract the handle came from this library and is live.
    unsafe { p.as_ref() }.ok_or_else(|| {
        set_error("null handle".into());
        TgStatus::NullPointer
    })
}

fn cap(cap_t: f64) -> Option<f64> {
    (!cap_t.is_nan()).then_some(cap_t)
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Limiting gap edges. Pass NaN as `cap_t` to use the built-in capacity.
#[no_mangle]
pub extern "C" fn tg_gap_edges(n: u32, d: f64, b: f64, cap_t: f64, sigma: *mut f64, mu: *mut f64) -> TgStatus {
    guard(|| {
        let design = check(ScreenDesign::new(n, d, b))?;
        let gap = check(analytic::gap_edges(&design, cap(cap_t)))?;
        out(sigma, gap.sigma)?;
        out(mu, gap.mu)
    })
}

#[no_mangle]
pub extern "C" fn tg_inverse_design(sigma: f64, mu: f64, n: u32, cap_t: f64, d: *mut f64, b: *mut f64) -> TgStatus {
    guard(|| {
        let design = check(analytic::inverse_design(sigma, mu, n, cap(cap_t)))?;
        out(d, design.d)?;
        out(b, design.b)
    })
}

/// Aperture radius at period `eps`.
#[no_mangle]
pub extern "C" fn tg_hole_radius(n: u32, d: f64, b: f64, eps: f64, r: *mut f64) -> TgStatus {
    guard(|| {
        let params = check(ScreenParams::new(n, d, b, eps))?;
        out(r, check(analytic::hole_radius(&params))?)
    })
}

/// Two-trap gap edges, written as `[sigma1, mu1, sigma2, mu2]`.
#[no_mangle]
pub extern "C" fn tg_two_screen(
    n: u32,
    d1: f64,
    d2: f64,
    vol1: f64,
    vol2: f64,
    symmetrized: bool,
    cap_t: f64,
    edges: *mut f64,
) -> TgStatus {
    guard(|| {
        let input = TwoScreenInput { n, d1, d2, vol1, vol2 };
        let radicand = if symmetrized { Radicand::Symmetrized } else { Radicand::AsPrinted };
        let s = check(analytic::two_screen_gaps(&input, cap(cap_t), radicand))?;
        if edges.is_null() {
            set_error("null output pointer".into());
            return Err(TgStatus::NullPointer);
        }
        for (i, v) in [s.sigma1, s.mu1, s.sigma2, s.mu2].into_iter().enumerate() {
            // SAFETY: caller provides room for four values.
            unsafe { edges.add(i).write(v) };
        }
        Ok(())
    })
}

/// Maxwell frequency gaps, written as `[-sqrt(mu), -sqrt(sigma), sqrt(sigma), sqrt(mu)]`.
#[no_mangle]
pub extern "C" fn tg_maxwell_gap(sigma: f64, mu: f64, edges: *mut f64) -> TgStatus {
    guard(|| {
        let gap = check(analytic::GapSpec::new(sigma, mu))?;
        let [neg, pos] = check(analytic::maxwell_gap(&gap))?;
        if edges.is_null() {
            set_error("null output pointer".into());
            return Err(TgStatus::NullPointer);
        }
        for (i, v) in [neg.0, neg.1, pos.0, pos.1].into_iter().enumerate() {
            // SAFETY: caller provides room for four values.
            unsafe { edges.add(i).write(v) };
        }
        Ok(())
    })
}

/// Extrapolated capacity of the unit (n-1)-disc in R^n.
#[no_mangle]
pub extern "C" fn tg_disc_capacity(n: u32, h: f64, value: *mut f64) -> TgStatus {
    guard(|| {
        let r = check(capacity::disc_capacity(n, &capacity::RADII, h))?;
        out(value, r.cap_t)
    })
}

/// Builds a cell mesh; `h_max <= 0` selects the default size.
#[no_mangle]
pub extern "C" fn tg_mesh_build(b: f64, hole_radius: f64, h_max: f64, mesh_out: *mut *mut TgMesh) -> TgStatus {
    guard(|| {
        let mut geom = CellGeometry::new(b, hole_radius);
        if h_max > 0.0 {
            geom = geom.with_h_max(h_max);
        }
        let m = check(mesh::build_cell_mesh(&geom))?;
        out(mesh_out, Box::into_raw(Box::new(TgMesh { inner: m })))
    })
}

#[no_mangle]
pub extern "C" fn tg_mesh_node_count(mesh: *const TgMesh, count: *mut usize) -> TgStatus {
    guard(|| out(count, nonnull(mesh)?.inner.num_nodes()))
}

#[no_mangle]
pub extern "C" fn tg_mesh_triangle_count(mesh: *const TgMesh, count: *mut usize) -> TgStatus {
    guard(|| out(count, nonnull(mesh)?.inner.triangles.len()))
}

/// Whether every mesh quality check passes.
#[no_mangle]
pub extern "C" fn tg_mesh_validate(mesh: *const TgMesh, passed: *mut bool) -> TgStatus {
    guard(|| out(passed, mesh::validate_mesh(&nonnull(mesh)?.inner).passed()))
}

/// Releases a mesh. NULL is ignored.
#[no_mangle]
pub extern "C" fn tg_mesh_free(mesh: *mut TgMesh) {
    if !mesh.is_null() {
        // SAFETY: created by `tg_mesh_build` and not freed before.
        drop(unsafe { Box::from_raw(mesh) });
    }
}

/// Smallest `k` eigenvalues of the cell. `phi1`, `phi2` are used for
/// `TgOuter::Bloch` only. `tol <= 0` selects the default tolerance.
#[no_mangle]
pub extern "C" fn tg_spectrum_compute(
    mesh: *const TgMesh,
    outer: TgOuter,
    phi1: f64,
    phi2: f64,
    screen_dirichlet: bool,
    k: usize,
    tol: f64,
    seed: u64,
    spectrum_out: *mut *mut TgSpectrum,
) -> TgStatus {
    guard(|| {
        let m = &nonnull(mesh)?.inner;
        let mut regime = match outer {
            TgOuter::Neumann => BoundaryRegime::neumann(),
            TgOuter::Dirichlet => BoundaryRegime::dirichlet(),
            TgOuter::Bloch => BoundaryRegime::bloch([phi1, phi2]),
        };
        if screen_dirichlet {
            regime = regime.with_screen(ScreenBc::Dirichlet);
        }
        let mut opts = EigenOptions::default().with_seed(seed);
        if tol > 0.0 {
            opts = opts.with_tol(tol);
        }
        let pair = check(fem::assemble(m, &regime))?;
        let s = check(eigen::spectrum(&pair, k, &opts))?;
        let handle = TgSpectrum { values: s.values, residuals: s.residuals, iterations: s.iterations };
        out(spectrum_out, Box::into_raw(Box::new(handle)))
    })
}

#[no_mangle]
pub extern "C" fn tg_spectrum_len(spectrum: *const TgSpectrum, len: *mut usize) -> TgStatus {
    guard(|| out(len, nonnull(spectrum)?.values.len()))
}

#[no_mangle]
pub extern "C" fn tg_spectrum_iterations(spectrum: *const TgSpectrum, iterations: *mut usize) -> TgStatus {
    guard(|| out(iterations, nonnull(spectrum)?.iterations))
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), TgStatus> {
    if buf.is_null() {
        set_error("null output buffer".into());
        return Err(TgStatus::NullPointer);
    }
    if len < src.len() {
        set_error(format!("buffer holds {len} values, {} needed", src.len()));
        return Err(TgStatus::BufferTooSmall);
    }
    // SAFETY: caller guarantees `len` writable values at `buf`.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Copies the eigenvalues (ascending) into `buf`.
#[no_mangle]
pub extern "C" fn tg_spectrum_values(spectrum: *const TgSpectrum, buf: *mut f64, len: usize) -> TgStatus {
    guard(|| copy_out(&nonnull(spectrum)?.values, buf, len))
}

#[no_mangle]
pub extern "C" fn tg_spectrum_residuals(spectrum: *const TgSpectrum, buf: *mut f64, len: usize) -> TgStatus {
    guard(|| copy_out(&nonnull(spectrum)?.residuals, buf, len))
}

/// Releases a spectrum. NULL is ignored.
#[no_mangle]
pub extern "C" fn tg_spectrum_free(spectrum: *mut TgSpectrum) {
    if !spectrum.is_null() {
        // SAFETY: created by `tg_spectrum_compute` and not freed before.
        drop(unsafe { Box::from_raw(spectrum) });
    }
}
