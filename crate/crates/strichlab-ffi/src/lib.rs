//! C ABI over strichlab.
//!
//! Grids, fields and potentials cross the boundary as opaque handles created by
//! `sl_*_new`-style constructors and released with the matching `sl_*_free`.
//! Every fallible call returns an [`SlStatus`]; on failure the message is kept
//! per thread and can be read with [`sl_last_error`]. Panics never unwind into C.

use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use strichlab::cli::{run_verify, write_verify, Command, ExperimentConfig};
use strichlab::field::{make_grid, sample, ClosedForm, GridSpec, SampledField};
use strichlab::hamflow::{flow, scaled_det};
use strichlab::norms::{amalgam_lorentz_norm, amalgam_norm};
use strichlab::potentials::{LemmaConstants, Potential, PotentialSpec};
use strichlab::propagate::{Parametrix, PropagatorSpec, DEFAULT_SPLIT_DT};
use strichlab::stft::{stft, Window};
use strichlab::strichartz::{strichartz_quotient_with, AdmissiblePair, QuotientOptions};
use strichlab::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    GridMismatch = 4,
    DecayViolation = 5,
    BandViolation = 6,
    HorizonViolation = 7,
    NotAdmissible = 8,
    NonConvergent = 9,
    UnknownPotential = 10,
    Unsupported = 11,
    ConfigError = 12,
    IoError = 13,
    Internal = 14,
    Panic = 15,
}

impl From<&Error> for SlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidGrid(_) => SlStatus::InvalidGrid,
            Error::GridMismatch => SlStatus::GridMismatch,
            Error::DecayViolation { .. } => SlStatus::DecayViolation,
            Error::BandViolation { .. } => SlStatus::BandViolation,
            Error::HorizonViolation { .. } | Error::FocalTime { .. } => SlStatus::HorizonViolation,
            Error::NotAdmissible { .. } => SlStatus::NotAdmissible,
            Error::NonConvergent { .. } => SlStatus::NonConvergent,
            Error::UnknownPotential(_) => SlStatus::UnknownPotential,
            Error::Unsupported(_) => SlStatus::Unsupported,
            Error::InvalidExponent(_) | Error::InvalidArgument(_) | Error::StepBudget { .. } | Error::ZeroDenominator | Error::EmptyTrajectory => {
                SlStatus::InvalidArgument
            }
            Error::Certificate { .. } | Error::ConventionMismatch { .. } => SlStatus::Internal,
        }
    }
}

/// Opaque uniform grid.
pub struct SlGrid(GridSpec);
/// Opaque sampled complex field.
pub struct SlField(SampledField);
/// Opaque potential.
pub struct SlPotential(Potential);

/// Hamiltonian flow endpoint; `jacobian` is row-major ∂(x, ξ)/∂(x₀, ξ₀).
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlFlowPoint {
    pub t: f64,
    pub x: f64,
    pub xi: f64,
    pub jacobian: [f64; 4],
    pub phase: f64,
}

/// Flow-lemma constants of a potential.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlLemmaConstants {
    pub m: f64,
    pub t1: f64,
    pub mprime: f64,
    pub t2: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: SlStatus, msg: impl AsRef<str>) -> SlStatus {
    set_error(msg.as_ref());
    status
}

fn lib_err(e: Error) -> SlStatus {
    fail(SlStatus::from(&e), e.to_string())
}

/// Run `f`, converting panics into `SlStatus::Panic`.
fn guard(f: impl FnOnce() -> SlStatus) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == SlStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SlStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, SlStatus> {
    p.as_ref().ok_or_else(|| fail(SlStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), SlStatus> {
    if p.is_null() {
        Err(fail(SlStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! lib {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return lib_err(e),
        }
    };
}

/// Message of the last failure on this thread; empty after a success. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn sl_status_name(status: SlStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        SlStatus::Ok => b"ok\0",
        SlStatus::NullPointer => b"null pointer\0",
        SlStatus::InvalidArgument => b"invalid argument\0",
        SlStatus::InvalidGrid => b"invalid grid\0",
        SlStatus::GridMismatch => b"grid mismatch\0",
        SlStatus::DecayViolation => b"decay violation\0",
        SlStatus::BandViolation => b"band violation\0",
        SlStatus::HorizonViolation => b"horizon violation\0",
        SlStatus::NotAdmissible => b"pair not admissible\0",
        SlStatus::NonConvergent => b"not converged\0",
        SlStatus::UnknownPotential => b"unknown potential\0",
        SlStatus::Unsupported => b"unsupported\0",
        SlStatus::ConfigError => b"config error\0",
        SlStatus::IoError => b"i/o error\0",
        SlStatus::Internal => b"internal error\0",
        SlStatus::Panic => b"panic\0",
    };
    s.as_ptr().cast()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// grids

/// # Safety
/// `out` must be writable. The handle must be released with `sl_grid_free`.
#[no_mangle]
pub unsafe extern "C" fn sl_grid_new(dim: usize, points: usize, half_width: f64, out: *mut *mut SlGrid) -> SlStatus {
    guard(|| {
        tri!(out_ptr(out, "out"));
        let g = lib!(make_grid(dim, points, half_width));
        *out = Box::into_raw(Box::new(SlGrid(g)));
        SlStatus::Ok
    })
}

/// # Safety
/// `grid` must come from `sl_grid_new` and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sl_grid_free(grid: *mut SlGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Total number of samples (points per axis to the power dim).
///
/// # Safety
/// `grid` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sl_grid_len(grid: *const SlGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

// fields

/// L²-normalized Gaussian exp(-|x-c|²/(2σ²) + i k·x) with the same c and k on every axis.
///
/// # Safety
/// `grid` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_gaussian(
    grid: *const SlGrid,
    center: f64,
    sigma: f64,
    momentum: f64,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let g = tri!(deref(grid, "grid"));
        tri!(out_ptr(out, "out"));
        if !(sigma > 0.0) {
            return fail(SlStatus::InvalidArgument, "sigma must be positive");
        }
        let n = g.0.dim();
        let f = lib!(sample(&g.0, &ClosedForm::normalized(vec![center; n], sigma, vec![momentum; n])));
        *out = Box::into_raw(Box::new(SlField(f)));
        SlStatus::Ok
    })
}

/// Field from `len` complex samples given as interleaved (re, im) doubles.
///
/// # Safety
/// `values` must point to `2 * len` doubles; `grid` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_from_samples(
    grid: *const SlGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let g = tri!(deref(grid, "grid"));
        tri!(out_ptr(out, "out"));
        if values.is_null() {
            return fail(SlStatus::NullPointer, "values is null");
        }
        let raw = std::slice::from_raw_parts(values, 2 * len);
        let vals: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let f = lib!(SampledField::new(g.0, vals));
        *out = Box::into_raw(Box::new(SlField(f)));
        SlStatus::Ok
    })
}

/// # Safety
/// `field` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sl_field_free(field: *mut SlField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of complex samples.
///
/// # Safety
/// `field` must be live or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sl_field_len(field: *const SlField) -> usize {
    field.as_ref().map_or(0, |f| f.0.values().len())
}

/// Copy samples out as interleaved (re, im); `len` is the capacity in complex samples.
///
/// # Safety
/// `out` must have room for `2 * len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sl_field_values(field: *const SlField, out: *mut f64, len: usize) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        tri!(out_ptr(out, "out"));
        let v = f.0.values();
        if len < v.len() {
            return fail(SlStatus::InvalidArgument, format!("buffer holds {len} samples, field has {}", v.len()));
        }
        let dst = std::slice::from_raw_parts_mut(out, 2 * v.len());
        for (d, z) in dst.chunks_exact_mut(2).zip(v) {
            d[0] = z.re;
            d[1] = z.im;
        }
        SlStatus::Ok
    })
}

/// # Safety
/// `field` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_norm_l2(field: *const SlField, out: *mut f64) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        tri!(out_ptr(out, "out"));
        *out = f.0.norm_l2();
        SlStatus::Ok
    })
}

// potentials

/// Builtin by name: zero, harmonic, inverted_harmonic, stark (one parameter E),
/// cosine, quad_plus_trig.
///
/// # Safety
/// `name` must be a NUL-terminated string, `params` must hold `nparams` doubles
/// (may be null when `nparams` is 0), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_potential_builtin(
    name: *const c_char,
    params: *const f64,
    nparams: usize,
    out: *mut *mut SlPotential,
) -> SlStatus {
    guard(|| {
        let name = tri!(c_str(name, "name"));
        tri!(out_ptr(out, "out"));
        let params: &[f64] = if nparams == 0 {
            &[]
        } else if params.is_null() {
            return fail(SlStatus::NullPointer, "params is null");
        } else {
            std::slice::from_raw_parts(params, nparams)
        };
        let p = lib!(Potential::builtin(name, params));
        *out = Box::into_raw(Box::new(SlPotential(p)));
        SlStatus::Ok
    })
}

/// # Safety
/// `potential` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sl_potential_free(potential: *mut SlPotential) {
    if !potential.is_null() {
        drop(Box::from_raw(potential));
    }
}

/// # Safety
/// `potential` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_lemma_constants(potential: *const SlPotential, out: *mut SlLemmaConstants) -> SlStatus {
    guard(|| {
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let c = LemmaConstants::of(&p.0, 1);
        *out = SlLemmaConstants { m: c.m, t1: c.t1, mprime: c.mprime, t2: c.t2 };
        SlStatus::Ok
    })
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, SlStatus> {
    if s.is_null() {
        return Err(fail(SlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(SlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

// flow

/// Störmer–Verlet flow with `steps` steps; 0 picks the default count.
///
/// # Safety
/// `potential` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_flow(
    potential: *const SlPotential,
    t: f64,
    x: f64,
    xi: f64,
    steps: usize,
    out: *mut SlFlowPoint,
) -> SlStatus {
    guard(|| {
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let steps = if steps == 0 { strichlab::hamflow::default_steps(&p.0, t) } else { steps };
        let fp = lib!(flow(&p.0, t, x, xi, steps));
        let j = fp.jacobian;
        *out = SlFlowPoint { t: fp.t, x: fp.x, xi: fp.xi, jacobian: [j[0][0], j[0][1], j[1][0], j[1][1]], phase: fp.phase };
        SlStatus::Ok
    })
}

/// det ∂x(t; x, ξ/t)/∂ξ; `steps` = 0 picks the default count.
///
/// # Safety
/// `potential` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_scaled_det(
    potential: *const SlPotential,
    t: f64,
    x: f64,
    xi: f64,
    steps: usize,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let steps = if steps == 0 { strichlab::hamflow::default_steps(&p.0, t) } else { steps };
        *out = lib!(scaled_det(&p.0, t, x, xi, steps));
        SlStatus::Ok
    })
}

// propagation

fn spec_of(p: &Potential) -> Result<PotentialSpec, SlStatus> {
    Ok(match p.name() {
        "zero" => PotentialSpec::Zero,
        "harmonic" => PotentialSpec::Harmonic,
        "inverted_harmonic" => PotentialSpec::InvertedHarmonic,
        "cosine" => PotentialSpec::Cosine,
        "quad_plus_trig" => PotentialSpec::QuadPlusTrig,
        other => match p.stark_field() {
            Some(field) => PotentialSpec::Stark { field },
            None => return Err(fail(SlStatus::Unsupported, format!("no propagator for potential {other}"))),
        },
    })
}

/// U(t)f: closed form when the potential has one, else certified split-step at
/// `split_dt` (0 picks the default).
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_propagate(
    field: *const SlField,
    potential: *const SlPotential,
    t: f64,
    split_dt: f64,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let dt = if split_dt == 0.0 { DEFAULT_SPLIT_DT } else { split_dt };
        let spec = tri!(spec_of(&p.0));
        let u = lib!(PropagatorSpec::for_potential(&spec, dt).apply(&f.0, t));
        *out = Box::into_raw(Box::new(SlField(u)));
        SlStatus::Ok
    })
}

/// Parametrix U₀(t)f.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_parametrix_apply(
    field: *const SlField,
    potential: *const SlPotential,
    t: f64,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let u = lib!(Parametrix::new(p.0.clone()).u0(&f.0, t));
        *out = Box::into_raw(Box::new(SlField(u)));
        SlStatus::Ok
    })
}

/// Relative residual of U(t)f = U₀(t)f - i∫₀^t R(t,s)U(s)f ds with `nodes` quadrature nodes.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_duhamel_residual(
    field: *const SlField,
    potential: *const SlPotential,
    t: f64,
    nodes: usize,
    split_dt: f64,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        let p = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let par = Parametrix::new(p.0.clone());
        let par = par.clone().with_horizon(par.horizon().max(t.abs()));
        *out = lib!(par.duhamel_residual(&f.0, t, nodes, split_dt)).residual;
        SlStatus::Ok
    })
}

// norms

/// ‖V_g f‖_{L²} with the unit Gaussian window (one dimension).
///
/// # Safety
/// `field` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_stft_norm(field: *const SlField, out: *mut f64) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        tri!(out_ptr(out, "out"));
        *out = lib!(stft(&f.0, &Window::gaussian())).norm_l2();
        SlStatus::Ok
    })
}

/// ‖f‖_{W(ℱL^p, L^q)}; pass INFINITY for an infinite exponent.
///
/// # Safety
/// `field` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_amalgam_norm(field: *const SlField, p: f64, q: f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        tri!(out_ptr(out, "out"));
        *out = lib!(amalgam_norm(&f.0, p, q, &Window::gaussian()));
        SlStatus::Ok
    })
}

/// ‖f‖_{W(ℱL^{p′,2}, L^p)}.
///
/// # Safety
/// `field` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_amalgam_lorentz_norm(field: *const SlField, p: f64, out: *mut f64) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        tri!(out_ptr(out, "out"));
        *out = lib!(amalgam_lorentz_norm(&f.0, p, &Window::gaussian()));
        SlStatus::Ok
    })
}

/// Strichartz quotient over [-T, T] with `samples` uniform times (0 picks 65).
/// `endpoint` non-zero selects the Lorentz inner norm.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_strichartz_quotient(
    field: *const SlField,
    potential: *const SlPotential,
    big_t: f64,
    p: f64,
    r: f64,
    endpoint: i32,
    samples: usize,
    out: *mut f64,
) -> SlStatus {
    guard(|| {
        let f = tri!(deref(field, "field"));
        let pot = tri!(deref(potential, "potential"));
        tri!(out_ptr(out, "out"));
        let pair = lib!(AdmissiblePair::new(f.0.grid().dim(), p, r));
        let mut opts = QuotientOptions::default();
        if samples != 0 {
            opts.samples = samples;
        }
        let spec = tri!(spec_of(&pot.0));
        let prop = PropagatorSpec::for_potential(&spec, opts.split_dt);
        *out = lib!(strichartz_quotient_with(&prop, &f.0, big_t, &pair, endpoint != 0, &opts));
        SlStatus::Ok
    })
}

// harness

/// Run the verify suites for a TOML config (null = defaults) and write report.json
/// and results.csv under `out_dir` (null = no files). `passed` receives 1 or 0.
///
/// # Safety
/// Strings must be NUL-terminated or null; `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_verify(config_toml: *const c_char, out_dir: *const c_char, passed: *mut i32) -> SlStatus {
    guard(|| {
        tri!(out_ptr(passed, "passed"));
        let cfg = if config_toml.is_null() {
            ExperimentConfig::defaults(None)
        } else {
            let text = tri!(c_str(config_toml, "config_toml"));
            match ExperimentConfig::from_toml(text, None) {
                Ok(c) => c,
                Err(e) => return fail(SlStatus::ConfigError, e.to_string()),
            }
        };
        if let Err(e) = cfg.validate(Command::Verify) {
            return fail(SlStatus::ConfigError, e.to_string());
        }
        let report = run_verify(&cfg);
        if !out_dir.is_null() {
            let dir = tri!(c_str(out_dir, "out_dir"));
            if let Err(e) = write_verify(Path::new(dir), &report) {
                return fail(SlStatus::IoError, e.to_string());
            }
        }
        *passed = i32::from(report.passed);
        SlStatus::Ok
    })
}
