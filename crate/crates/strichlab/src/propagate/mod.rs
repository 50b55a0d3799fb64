//! Reference propagators for U(t) = e^{-itH}, H = -Δ/2 + V, and the
//! phase-space parametrix with its remainder operators.

mod parametrix;

pub use parametrix::{
    apply_hamiltonian, DefectCheck, phase_multiplier, taylor_stft, DuhamelReport, FlowStepping, Parametrix, DEFAULT_SPLIT_DT,
};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{GridSpec, SampledField};
use crate::potentials::{Potential, PotentialSpec};
use crate::stft::{evolved_window, stft, stft_at, Window};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Distance from focal times inside which the kernel path refuses to run.
pub const FOCAL_GAP: f64 = 0.05;
/// Relative L² change below which a split-step halving certifies convergence.
pub const SPLIT_TOL: f64 = 1e-8;

/// Frequency of raw FFT bin k on an axis of N points and half-width L.
fn raw_freq(k: usize, n: usize, l: f64) -> f64 {
    let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    signed * PI / l
}

/// Multiply the spectrum by m(ξ); works in raw FFT order (the grid offset cancels).
fn multiply_spectrum(grid: &GridSpec, values: &mut [Complex64], m: impl Fn(&[f64]) -> Complex64 + Sync) {
    let n = grid.points_per_axis();
    let l = grid.half_width();
    match grid.dim() {
        1 => {
            fft::forward(values);
            let scale = 1.0 / n as f64;
            for (k, v) in values.iter_mut().enumerate() {
                *v *= m(&[raw_freq(k, n, l)]) * scale;
            }
            fft::inverse(values);
        }
        _ => {
            fft::transform_2d(values, n, false);
            let scale = 1.0 / (n * n) as f64;
            for (idx, v) in values.iter_mut().enumerate() {
                let xi = [raw_freq(idx / n, n, l), raw_freq(idx % n, n, l)];
                *v *= m(&xi) * scale;
            }
            fft::transform_2d(values, n, true);
        }
    }
}

fn finish(f: &SampledField, values: Vec<Complex64>) -> Result<SampledField> {
    let out = f.derived(values);
    out.require_decay()?;
    Ok(out)
}

/// e^{itΔ/2} f via the multiplier e^{-it|ξ|²/2}.
pub fn free_prop(f: &SampledField, t: f64) -> Result<SampledField> {
    f.require_decay()?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let mut v = f.values().to_vec();
    multiply_spectrum(f.grid(), &mut v, |xi| {
        let k2: f64 = xi.iter().map(|k| k * k).sum();
        Complex64::from_polar(1.0, -0.5 * t * k2)
    });
    finish(f, v)
}

/// T_a f(x) = f(x - a) by the spectral phase e^{-iaξ} (one dimension).
pub fn translate(f: &SampledField, a: f64) -> Result<SampledField> {
    check_1d(f)?;
    let mut v = f.values().to_vec();
    multiply_spectrum(f.grid(), &mut v, |xi| Complex64::from_polar(1.0, -a * xi[0]));
    Ok(f.derived(v))
}

/// max |V_{g(t)}[e^{itΔ/2}f](x, ξ) - e^{-itξ²/2}·V_g f(x - tξ, ξ)| over every
/// `stride`-th grid node in x and ξ (one dimension).
pub fn free_covariance_deviation(f: &SampledField, t: f64, window: &Window, stride: usize) -> Result<f64> {
    check_1d(f)?;
    let grid = *f.grid();
    let lhs = stft(&free_prop(f, t)?, &evolved_window(window, t)?)?;
    let n = grid.points_per_axis();
    let stride = stride.max(1);
    let worst = (0..n)
        .step_by(stride)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let x = grid.coord(j);
            (0..n)
                .step_by(stride)
                .map(|k| {
                    let xi = grid.freq(k);
                    let rhs = Complex64::from_polar(1.0, -0.5 * t * xi * xi) * stft_at(f, window, &[x - t * xi], &[xi]);
                    (lhs.at(j, k) - rhs).norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

fn check_1d(f: &SampledField) -> Result<()> {
    if f.grid().dim() != 1 {
        return Err(Error::Unsupported("this propagator is one-dimensional".into()));
    }
    Ok(())
}

/// e^{-itH} for V = E·x: e^{-iE²t³/6} e^{-itEx} T_{-Et²/2} e^{itΔ/2}.
pub fn stark_prop(f: &SampledField, t: f64, e: f64) -> Result<SampledField> {
    check_1d(f)?;
    f.require_decay()?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let grid = *f.grid();
    let shift = -0.5 * e * t * t;
    let mut v = f.values().to_vec();
    multiply_spectrum(&grid, &mut v, |xi| Complex64::from_polar(1.0, -0.5 * t * xi[0] * xi[0] - shift * xi[0]));
    let global = -e * e * t * t * t / 6.0;
    for (m, val) in v.iter_mut().enumerate() {
        *val *= Complex64::from_polar(1.0, global - t * e * grid.coord(m));
    }
    finish(f, v)
}

/// Oscillator (sign = +1, V = x²/2) or inverted oscillator (sign = -1, V = -x²/2)
/// by quadrature against the Mehler kernel. Refuses |t - kπ| < FOCAL_GAP for the
/// oscillator and |t| < FOCAL_GAP for the inverted case; t = 0 is the identity.
pub fn harmonic_prop(f: &SampledField, t: f64, sign: f64) -> Result<SampledField> {
    check_1d(f)?;
    f.require_decay()?;
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidArgument(format!("harmonic sign must be ±1, got {sign}")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let (s, c, prefactor) = if sign > 0.0 {
        let k = (t / PI).round();
        let distance = (t - k * PI).abs();
        if distance < FOCAL_GAP {
            return Err(Error::FocalTime { t, distance });
        }
        let turns = 2.0 * (t / PI).floor() + 1.0;
        let pre = Complex64::from_polar((2.0 * PI * t.sin().abs()).powf(-0.5), -PI * turns / 4.0);
        (t.sin(), t.cos(), pre)
    } else {
        if t.abs() < FOCAL_GAP {
            return Err(Error::FocalTime { t, distance: t.abs() });
        }
        let pre = Complex64::from_polar((2.0 * PI * t.sinh().abs()).powf(-0.5), -PI * t.signum() / 4.0);
        (t.sinh(), t.cosh(), pre)
    };
    let grid = *f.grid();
    let n = grid.points_per_axis();
    let h = grid.spacing();
    let xs = grid.coords();
    let (lo, hi) = support_range(f.values());
    let chirp: Vec<Complex64> = xs.iter().map(|x| Complex64::from_polar(1.0, x * x * c / (2.0 * s))).collect();
    let src: Vec<Complex64> = (lo..=hi).map(|m| chirp[m] * f.values()[m]).collect();
    let out: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = xs[j];
            let acc: Complex64 = src
                .iter()
                .enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, -x * xs[lo + i] / s))
                .sum();
            acc * chirp[j] * prefactor * h
        })
        .collect();
    finish(f, out)
}

fn support_range(values: &[Complex64]) -> (usize, usize) {
    let top = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let cut = 1e-18 * top;
    let lo = values.iter().position(|v| v.norm() > cut).unwrap_or(0);
    let hi = values.iter().rposition(|v| v.norm() > cut).unwrap_or(0);
    (lo, hi)
}

/// Oscillator propagators through e^{∓iτx²/2} e^{i s Δ/2} e^{∓iτx²/2} with
/// (s, τ) = (sin t, tan(t/2)) or (sinh t, tanh(t/2)); long times are split in halves.
pub fn harmonic_prop_factorized(f: &SampledField, t: f64, sign: f64) -> Result<SampledField> {
    check_1d(f)?;
    f.require_decay()?;
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidArgument(format!("harmonic sign must be ±1, got {sign}")));
    }
    let pieces = if sign > 0.0 { (t.abs() / (PI / 2.0)).ceil().max(1.0) as usize } else { 1 };
    let tp = t / pieces as f64;
    let (s, tau) = if sign > 0.0 { (tp.sin(), (tp / 2.0).tan()) } else { (tp.sinh(), (tp / 2.0).tanh()) };
    let grid = *f.grid();
    let kick: Vec<Complex64> =
        grid.coords().iter().map(|x| Complex64::from_polar(1.0, -sign * tau * x * x / 2.0)).collect();
    let mut v = f.values().to_vec();
    for _ in 0..pieces {
        v.iter_mut().zip(&kick).for_each(|(a, k)| *a *= k);
        multiply_spectrum(&grid, &mut v, |xi| Complex64::from_polar(1.0, -0.5 * s * xi[0] * xi[0]));
        v.iter_mut().zip(&kick).for_each(|(a, k)| *a *= k);
    }
    finish(f, v)
}

/// Strang splitting with exactly ceil(|t|/dt) steps; no certificate.
pub fn splitstep_raw(f: &SampledField, t: f64, potential: &Potential, dt: f64) -> Result<SampledField> {
    check_1d(f)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("split-step Δt = {dt} must be positive")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    let grid = *f.grid();
    let steps = (t.abs() / dt).ceil().max(1.0) as usize;
    let d = t / steps as f64;
    let n = grid.points_per_axis();
    let l = grid.half_width();
    let pot: Vec<f64> = grid.coords().iter().map(|&x| potential.value(x)).collect();
    let half: Vec<Complex64> = pot.iter().map(|v| Complex64::from_polar(1.0, -0.5 * d * v)).collect();
    let full: Vec<Complex64> = half.iter().map(|v| v * v).collect();
    let scale = 1.0 / n as f64;
    let kinetic: Vec<Complex64> = (0..n)
        .map(|k| {
            let xi = raw_freq(k, n, l);
            Complex64::from_polar(scale, -0.5 * d * xi * xi)
        })
        .collect();
    let fwd = fft::plan(n, false);
    let inv = fft::plan(n, true);
    let mut v = f.values().to_vec();
    v.iter_mut().zip(&half).for_each(|(a, k)| *a *= k);
    for step in 0..steps {
        fwd.process(&mut v);
        v.iter_mut().zip(&kinetic).for_each(|(a, k)| *a *= k);
        inv.process(&mut v);
        let kick = if step + 1 == steps { &half } else { &full };
        v.iter_mut().zip(kick).for_each(|(a, k)| *a *= k);
    }
    Ok(f.derived(v))
}

/// Strang splitting certified by comparison with the halved step: fails with
/// `NonConvergent` when the two differ by more than SPLIT_TOL relative in L²,
/// otherwise returns the finer result.
pub fn splitstep_prop(f: &SampledField, t: f64, potential: &Potential, dt: f64) -> Result<SampledField> {
    f.require_decay()?;
    let coarse = splitstep_raw(f, t, potential, dt)?;
    let fine = splitstep_raw(f, t, potential, dt / 2.0)?;
    let norm = f.norm_l2();
    let change = if norm == 0.0 { 0.0 } else { coarse.sub(&fine)?.norm_l2() / norm };
    if change > SPLIT_TOL {
        return Err(Error::NonConvergent { change });
    }
    fine.require_decay()?;
    Ok(fine)
}

/// Serializable choice of reference propagator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropagatorSpec {
    Free,
    Harmonic,
    InvertedHarmonic,
    Stark { field: f64 },
    Splitstep { potential: PotentialSpec, dt: f64 },
    Parametrix { potential: PotentialSpec, horizon: Option<f64> },
}

impl PropagatorSpec {
    /// The exact propagator for a potential when one exists, else split-step at Δt.
    pub fn for_potential(spec: &PotentialSpec, dt: f64) -> Self {
        match spec {
            PotentialSpec::Zero => PropagatorSpec::Free,
            PotentialSpec::Harmonic => PropagatorSpec::Harmonic,
            PotentialSpec::InvertedHarmonic => PropagatorSpec::InvertedHarmonic,
            PotentialSpec::Stark { field } => PropagatorSpec::Stark { field: *field },
            other => PropagatorSpec::Splitstep { potential: other.clone(), dt },
        }
    }

    pub fn label(&self) -> String {
        match self {
            PropagatorSpec::Free => "free".into(),
            PropagatorSpec::Harmonic => "harmonic".into(),
            PropagatorSpec::InvertedHarmonic => "inverted_harmonic".into(),
            PropagatorSpec::Stark { field } => format!("stark({field})"),
            PropagatorSpec::Splitstep { potential, dt } => format!("splitstep({},{dt})", potential.build()),
            PropagatorSpec::Parametrix { potential, .. } => format!("parametrix({})", potential.build()),
        }
    }

    /// Apply U(t). Oscillators use the factorized closed form, valid at every t.
    pub fn apply(&self, f: &SampledField, t: f64) -> Result<SampledField> {
        match self {
            PropagatorSpec::Free => free_prop(f, t),
            PropagatorSpec::Harmonic => harmonic_prop_factorized(f, t, 1.0),
            PropagatorSpec::InvertedHarmonic => harmonic_prop_factorized(f, t, -1.0),
            PropagatorSpec::Stark { field } => stark_prop(f, t, *field),
            PropagatorSpec::Splitstep { potential, dt } => splitstep_prop(f, t, &potential.build(), *dt),
            PropagatorSpec::Parametrix { potential, horizon } => {
                let mut p = Parametrix::new(potential.build());
                if let Some(h) = horizon {
                    p = p.with_horizon(*h);
                }
                p.u0(f, t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid, sample, ClosedForm};
    use crate::norms::{amalgam_norm, amalgam_norm_with, RowSampling};

    fn packet(grid: &GridSpec, x0: f64, sigma: f64, k: f64) -> SampledField {
        sample(grid, &ClosedForm::normalized(vec![x0], sigma, vec![k])).unwrap()
    }

    /// Free evolution of e^{-x²/2}: (1+it)^{-1/2} e^{-x²/(2(1+it))}.
    fn free_gaussian(x: f64, t: f64) -> Complex64 {
        let z = Complex64::new(1.0, t);
        (-(x * x) / (2.0 * z)).exp() / z.sqrt()
    }

    #[test]
    fn free_prop_identity_unitarity_closed_form() {
        let grid = make_grid(1, 1024, 32.0).unwrap();
        let f = sample(&grid, &ClosedForm::gaussian(0.0, 1.0)).unwrap();
        assert_eq!(free_prop(&f, 0.0).unwrap().values(), f.values());
        let u = free_prop(&f, 1.0).unwrap();
        assert!((u.norm_l2() - f.norm_l2()).abs() < 1e-12);
        let err = (0..1024).map(|m| (u.values()[m] - free_gaussian(grid.coord(m), 1.0)).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn free_prop_two_dimensions_factorizes() {
        let g1 = make_grid(1, 64, 8.0).unwrap();
        let g2 = make_grid(2, 64, 8.0).unwrap();
        let f1 = sample(&g1, &ClosedForm::gaussian(0.0, 1.0)).unwrap();
        let f2 = sample(&g2, &ClosedForm::Gaussian { center: vec![0.0, 0.0], sigma: 1.0, amplitude: 1.0.into() }).unwrap();
        let u1 = free_prop(&f1, 0.4).unwrap();
        let u2 = free_prop(&f2, 0.4).unwrap();
        for i in [10, 32, 40] {
            for j in [5, 30, 33] {
                assert!((u2.values()[i * 64 + j] - u1.values()[i] * u1.values()[j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn free_covariance_identity() {
        let grid = make_grid(1, 512, 24.0).unwrap();
        let f = packet(&grid, 0.5, 0.8, 1.5);
        for t in [0.05, 0.1, 0.2, 0.3] {
            let d = free_covariance_deviation(&f, t, &Window::gaussian(), 4).unwrap();
            assert!(d < 1e-8, "{t} {d}");
        }
        // the opposite phase convention is far off
        let lhs = stft(&free_prop(&f, 0.2).unwrap(), &evolved_window(&Window::gaussian(), -0.2).unwrap()).unwrap();
        let (x, xi) = (grid.coord(256), grid.freq(270));
        let rhs = Complex64::from_polar(1.0, -0.1 * xi * xi) * stft_at(&f, &Window::gaussian(), &[x - 0.2 * xi], &[xi]);
        assert!((lhs.at(256, 270) - rhs).norm() > 1e-3);
    }

    #[test]
    fn stark_reduces_to_free_and_is_unitary() {
        let grid = make_grid(1, 1024, 32.0).unwrap();
        let f = packet(&grid, 0.5, 1.0, 1.0);
        let a = stark_prop(&f, 0.3, 0.0).unwrap();
        let b = free_prop(&f, 0.3).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-13);
        let s = stark_prop(&f, 0.3, 2.0).unwrap();
        assert!((s.norm_l2() - f.norm_l2()).abs() < 1e-12);
    }

    #[test]
    fn stark_matches_splitstep() {
        // Strang is exact for a linear potential up to the scalar double commutator,
        // which leaves the global phase error E²t·dt²/24
        let grid = make_grid(1, 1024, 32.0).unwrap();
        let f = packet(&grid, -1.0, 1.0, 0.5);
        let (e, t) = (1.5, 0.5);
        let exact = stark_prop(&f, t, e).unwrap();
        for dt in [1e-2, 1e-3] {
            let split = splitstep_raw(&f, t, &Potential::stark(e), dt).unwrap();
            let err = exact.rel_l2_error(&split).unwrap();
            let predicted = e * e * t * dt * dt / 24.0;
            assert!((err / predicted - 1.0).abs() < 1e-3, "{err} {predicted}");
        }
        let wrong = stark_prop(&f, t, -e).unwrap();
        assert!(wrong.rel_l2_error(&splitstep_raw(&f, t, &Potential::stark(e), 1e-3).unwrap()).unwrap() > 0.1);
    }

    #[test]
    fn stark_amalgam_covariance() {
        let grid = make_grid(1, 1024, 32.0).unwrap();
        let f = packet(&grid, 0.0, 0.7, 1.0);
        let w = Window::gaussian();
        let rows = RowSampling::exact().with_continuous_sup(true);
        for e in [0.5, 2.0] {
            for t in [0.1, 0.3] {
                let a = amalgam_norm_with(&stark_prop(&f, t, e).unwrap(), f64::INFINITY, 1.0, &w, &rows).unwrap();
                let b = amalgam_norm_with(&free_prop(&f, t).unwrap(), f64::INFINITY, 1.0, &w, &rows).unwrap();
                assert!((a - b).abs() < 1e-6 * b, "{a} {b}");
            }
        }
        // grid-aligned translation needs no search
        for (e, t) in [(2.0, 0.25), (8.0, 0.125)] {
            let a = amalgam_norm(&stark_prop(&f, t, e).unwrap(), f64::INFINITY, 1.0, &w).unwrap();
            let b = amalgam_norm(&free_prop(&f, t).unwrap(), f64::INFINITY, 1.0, &w).unwrap();
            assert!((a - b).abs() < 1e-9 * b, "{a} {b}");
        }
    }

    #[test]
    fn mehler_kernel_agrees_with_factorization_and_splitstep() {
        let grid = make_grid(1, 1024, 24.0).unwrap();
        let f = packet(&grid, 1.0, 1.0, 0.0);
        let t = PI / 4.0;
        let kernel = harmonic_prop(&f, t, 1.0).unwrap();
        let fact = harmonic_prop_factorized(&f, t, 1.0).unwrap();
        let split = splitstep_prop(&f, t, &Potential::harmonic(), 1e-4).unwrap();
        assert!(kernel.rel_l2_error(&fact).unwrap() < 1e-10);
        assert!(kernel.rel_l2_error(&split).unwrap() < 1e-6);
        assert!((kernel.norm_l2() - 1.0).abs() < 1e-8);
        // coherent state: |u(t, x)| = |u(0, x - cos t)| with unit width
        for m in (0..1024).step_by(37) {
            let x = grid.coord(m);
            let expect = PI.powf(-0.25) * (-(x - t.cos()).powi(2) / 2.0).exp();
            assert!((kernel.values()[m].norm() - expect).abs() < 1e-10);
        }
        let long = harmonic_prop_factorized(&f, 4.0, 1.0).unwrap();
        let long_k = harmonic_prop(&f, 4.0, 1.0).unwrap();
        assert!(long.rel_l2_error(&long_k).unwrap() < 1e-9);
    }

    #[test]
    fn inverted_oscillator_paths_agree() {
        let grid = make_grid(1, 2048, 48.0).unwrap();
        let f = packet(&grid, 0.0, 1.0, 0.3);
        let kernel = harmonic_prop(&f, 0.6, -1.0).unwrap();
        let fact = harmonic_prop_factorized(&f, 0.6, -1.0).unwrap();
        let split = splitstep_prop(&f, 0.6, &Potential::inverted_harmonic(), 1e-4).unwrap();
        assert!(kernel.rel_l2_error(&fact).unwrap() < 1e-10);
        assert!(fact.rel_l2_error(&split).unwrap() < 1e-6);
    }

    #[test]
    fn harmonic_focal_and_identity() {
        let grid = make_grid(1, 512, 16.0).unwrap();
        let f = packet(&grid, 0.0, 1.0, 0.0);
        assert!(matches!(harmonic_prop(&f, PI + 0.01, 1.0), Err(Error::FocalTime { .. })));
        assert!(matches!(harmonic_prop(&f, 0.02, 1.0), Err(Error::FocalTime { .. })));
        assert_eq!(harmonic_prop(&f, 0.0, 1.0).unwrap().values(), f.values());
        assert!(harmonic_prop(&f, 0.5, 2.0).is_err());
    }

    #[test]
    fn splitstep_free_exact_and_second_order() {
        let grid = make_grid(1, 1024, 32.0).unwrap();
        let f = packet(&grid, 0.0, 1.0, 1.0);
        let a = splitstep_prop(&f, 0.4, &Potential::zero(), 0.1).unwrap();
        assert!(a.rel_l2_error(&free_prop(&f, 0.4).unwrap()).unwrap() < 1e-12);
        let c = Potential::cosine();
        let reference = splitstep_raw(&f, 0.5, &c, 1e-4).unwrap();
        let e1 = splitstep_raw(&f, 0.5, &c, 0.02).unwrap().rel_l2_error(&reference).unwrap();
        let e2 = splitstep_raw(&f, 0.5, &c, 0.01).unwrap().rel_l2_error(&reference).unwrap();
        assert!((e1 / e2 - 4.0).abs() < 0.3, "{}", e1 / e2);
        assert!(matches!(splitstep_prop(&f, 0.5, &Potential::quad_plus_trig(), 0.25), Err(Error::NonConvergent { .. })));
        let u = splitstep_prop(&f, 0.5, &c, 2e-4).unwrap();
        assert!((u.norm_l2() - f.norm_l2()).abs() < 1e-10);
    }

    #[test]
    fn propagator_label_round_trip() {
        let spec: PropagatorSpec = toml::from_str("kind = \"splitstep\"\ndt = 0.001\n[potential]\nname = \"cosine\"\n").unwrap();
        assert_eq!(spec.label(), "splitstep(cosine,0.001)");
        let grid = make_grid(1, 512, 16.0).unwrap();
        let f = packet(&grid, 0.0, 1.0, 0.0);
        let a = PropagatorSpec::Harmonic.apply(&f, 0.3).unwrap();
        let b = harmonic_prop(&f, 0.3, 1.0).unwrap();
        assert!(a.rel_l2_error(&b).unwrap() < 1e-10);
    }
}
