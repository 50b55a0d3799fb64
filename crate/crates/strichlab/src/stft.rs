//! Discrete short-time Fourier transform
//! V_g f(x, ξ) = ∫ conj(g(y - x)) f(y) e^{-iyξ} dy, its adjoint, the freely
//! evolved Gaussian windows g(t) = e^{itΔ/2} g, and closed-form phase-space
//! test functions.

use crate::error::{Error, Result};
use crate::field::{self, Domain, GridSpec, SampledField, DEFAULT_TAIL_TOL};
use crate::norms;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default bound on |t| for evolved windows.
pub const DEFAULT_WINDOW_HORIZON: f64 = 2.0;

/// Relative modulus below which window samples are dropped from sums.
pub const WINDOW_EPS: f64 = 1e-17;

/// Gaussian window evolved by the free flow: g(t, y) = π^{-n/4}(1+it)^{-n/2} e^{-|y|²/(2(1+it))}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    t: f64,
    horizon: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window::gaussian()
    }
}

impl Window {
    /// The normalized Gaussian π^{-n/4} e^{-|y|²/2}.
    pub fn gaussian() -> Self {
        Window { t: 0.0, horizon: DEFAULT_WINDOW_HORIZON }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// (A, b) with g(t, y) = A e^{-b y²/2} in one dimension.
    pub fn coeffs(&self) -> (Complex64, Complex64) {
        let z = Complex64::new(1.0, self.t);
        (PI.powf(-0.25) / z.sqrt(), 1.0 / z)
    }

    pub fn eval(&self, y: f64) -> Complex64 {
        let (a, b) = self.coeffs();
        a * (-b * (y * y / 2.0)).exp()
    }

    pub fn eval_nd(&self, y: &[f64]) -> Complex64 {
        y.iter().map(|&v| self.eval(v)).product()
    }

    /// sup_y |g(t, y)| per axis, π^{-1/4}(1+t²)^{-1/4}.
    pub fn sup(&self) -> f64 {
        PI.powf(-0.25) * (1.0 + self.t * self.t).powf(-0.25)
    }

    /// Radius beyond which |g| < eps·sup (per axis).
    pub fn radius(&self, eps: f64) -> f64 {
        (2.0 * (1.0 + self.t * self.t) * (1.0 / eps).ln()).sqrt()
    }

    /// Radius beyond which |ĝ| < eps·sup|ĝ|; time-independent.
    pub fn fourier_radius(eps: f64) -> f64 {
        (2.0 * (1.0 / eps).ln()).sqrt()
    }

    pub fn sampled(&self, grid: &GridSpec) -> SampledField {
        let mut y = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|idx| {
                grid.point(idx, &mut y);
                self.eval_nd(&y)
            })
            .collect();
        SampledField::from_parts(*grid, Domain::Space, values, DEFAULT_TAIL_TOL)
    }

    /// Window samples g(t, d·h) for |d| ≤ R, indexed d + R.
    pub(crate) fn offset_table(&self, h: f64, eps: f64) -> (usize, Vec<Complex64>) {
        let r = (self.radius(eps) / h).ceil() as usize;
        let table = (0..=2 * r).map(|k| self.eval((k as f64 - r as f64) * h)).collect();
        (r, table)
    }
}

/// g(window.t + t), checked against spectral propagation of the samples.
pub fn evolved_window(window: &Window, t: f64) -> Result<Window> {
    let total = window.t + t;
    if total.abs() > window.horizon {
        return Err(Error::HorizonViolation { t: total, horizon: window.horizon });
    }
    let out = Window { t: total, horizon: window.horizon };
    if t != 0.0 {
        let deviation = spectral_window_deviation(window, t);
        if !(deviation <= 1e-10) {
            return Err(Error::ConventionMismatch { deviation });
        }
    }
    Ok(out)
}

/// Max deviation between the closed form of g(t₀ + t) and e^{itΔ/2} applied
/// to samples of g(t₀) on the cross-check grid (1, 1024, 32).
pub fn spectral_window_deviation(window: &Window, t: f64) -> f64 {
    let grid = GridSpec::new(1, 1024, 32.0).expect("valid cross-check grid");
    let start = window.sampled(&grid);
    let mut spec = field::fourier(&start).into_values();
    for (i, v) in spec.iter_mut().enumerate() {
        let xi = grid.freq(i);
        *v *= Complex64::from_polar(1.0, -t * xi * xi / 2.0);
    }
    let spec = SampledField::from_parts(grid, Domain::Frequency, spec, DEFAULT_TAIL_TOL);
    let moved = field::inv_fourier(&spec);
    let target = Window { t: window.t + t, horizon: window.horizon };
    moved
        .values()
        .iter()
        .enumerate()
        .map(|(m, v)| (v - target.eval(grid.coord(m))).norm())
        .fold(0.0, f64::max)
}

/// Samples F(x_j, ξ_k) on the product of a 1D grid and its dual, row-major in x.
#[derive(Clone, Debug)]
pub struct PhaseSpaceField {
    grid: GridSpec,
    values: Vec<Complex64>,
    band_tail: f64,
    tail_tol: f64,
}

impl PhaseSpaceField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Unsupported("phase-space storage is one-dimensional".into()));
        }
        let n = grid.points_per_axis();
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!("{} values for an {n}×{n} phase space", values.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite phase-space sample".into()));
        }
        Ok(Self::from_parts(grid, values, DEFAULT_TAIL_TOL))
    }

    fn from_parts(grid: GridSpec, values: Vec<Complex64>, tail_tol: f64) -> Self {
        let n = grid.points_per_axis();
        let (lo, hi) = (n / 8, n - n / 8);
        let mut total = 0.0;
        let mut edge = 0.0;
        for row in values.chunks(n) {
            for (k, v) in row.iter().enumerate() {
                let w = v.norm_sqr();
                total += w;
                if k <= lo || k >= hi {
                    edge += w;
                }
            }
        }
        let band_tail = if total == 0.0 { 0.0 } else { edge / total };
        PhaseSpaceField { grid, values, band_tail, tail_tol }
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        let n = grid.points_per_axis();
        Self::new(grid, vec![Complex64::new(0.0, 0.0); n * n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn row(&self, j: usize) -> &[Complex64] {
        let n = self.grid.points_per_axis();
        &self.values[j * n..(j + 1) * n]
    }
    pub fn at(&self, j: usize, k: usize) -> Complex64 {
        self.values[j * self.grid.points_per_axis() + k]
    }
    /// Mass fraction in the outer quarter of the ξ-band.
    pub fn band_tail(&self) -> f64 {
        self.band_tail
    }
    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tol
    }
    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }
    pub fn require_band(&self) -> Result<()> {
        if self.band_tail > self.tail_tol {
            return Err(Error::BandViolation { fraction: self.band_tail, tolerance: self.tail_tol });
        }
        Ok(())
    }

    /// Quadrature pairing h·(π/L)/(2π)·Σ conj(F)G, the one making V_g* the adjoint of V_g.
    pub fn pairing(&self, other: &PhaseSpaceField) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let w = self.grid.spacing() * self.grid.dual_spacing() / (2.0 * PI);
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * w)
    }

    /// L² norm with the measure dx dξ (no 2π factor).
    pub fn norm_l2(&self) -> f64 {
        let w = self.grid.spacing() * self.grid.dual_spacing();
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt()
    }

    pub fn scale(&self, c: Complex64) -> PhaseSpaceField {
        Self::from_parts(self.grid, self.values.iter().map(|v| v * c).collect(), self.tail_tol)
    }

    pub fn axpy(&self, c: Complex64, other: &PhaseSpaceField) -> Result<PhaseSpaceField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self::from_parts(self.grid, values, self.tail_tol))
    }

    pub fn max_abs_diff(&self, other: &PhaseSpaceField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }
}

fn check_1d(f: &SampledField) -> Result<()> {
    if f.grid().dim() != 1 {
        return Err(Error::Unsupported("full phase-space transforms are one-dimensional; use the row norms".into()));
    }
    if f.domain() != Domain::Space {
        return Err(Error::InvalidArgument("expected a position-domain field".into()));
    }
    Ok(())
}

/// V_g f on every (x_j, ξ_k) node.
pub fn stft(f: &SampledField, window: &Window) -> Result<PhaseSpaceField> {
    check_1d(f)?;
    f.require_decay()?;
    let grid = *f.grid();
    let n = grid.points_per_axis();
    let (r, table) = window.offset_table(grid.spacing(), WINDOW_EPS);
    let vals = f.values();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(n - 1);
            for m in lo..=hi {
                buf[m] = table[m + r - j].conj() * vals[m];
            }
            field::transform(&grid, &mut buf, false);
            buf
        })
        .collect();
    let values = rows.concat();
    Ok(PhaseSpaceField::from_parts(grid, values, f.tail_tolerance()))
}

/// Grid indices m with |x_m - c| ≤ r, clipped to the domain.
pub(crate) fn index_range(grid: &GridSpec, c: f64, r: f64) -> Option<(usize, usize)> {
    let h = grid.spacing();
    let n = grid.points_per_axis() as f64;
    let lo = ((c - r + grid.half_width()) / h).ceil().max(0.0);
    let hi = ((c + r + grid.half_width()) / h).floor().min(n - 1.0);
    if hi < lo {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

/// V_g f at one arbitrary phase-space point by direct quadrature.
pub fn stft_at(f: &SampledField, window: &Window, x: &[f64], xi: &[f64]) -> Complex64 {
    let grid = f.grid();
    let n = grid.points_per_axis();
    let r = window.radius(WINDOW_EPS);
    let vals = f.values();
    let mut acc = Complex64::new(0.0, 0.0);
    let term = |m: usize, c: f64, k: f64| {
        let y = grid.coord(m);
        window.eval(y - c).conj() * Complex64::from_polar(1.0, -y * k)
    };
    match grid.dim() {
        1 => {
            if let Some((lo, hi)) = index_range(grid, x[0], r) {
                for m in lo..=hi {
                    acc += term(m, x[0], xi[0]) * vals[m];
                }
            }
        }
        _ => {
            if let (Some((lo0, hi0)), Some((lo1, hi1))) = (index_range(grid, x[0], r), index_range(grid, x[1], r)) {
                for a in lo0..=hi0 {
                    let ga = term(a, x[0], xi[0]);
                    for b in lo1..=hi1 {
                        acc += ga * term(b, x[1], xi[1]) * vals[a * n + b];
                    }
                }
            }
        }
    }
    acc * grid.cell_volume()
}

/// V_g* F(x) = Σ_{y,ξ} g(x - y) F(y, ξ) e^{ixξ} · h (π/L)/(2π).
pub fn adjoint_stft(big_f: &PhaseSpaceField, window: &Window) -> Result<SampledField> {
    big_f.require_band()?;
    let grid = big_f.grid;
    let n = grid.points_per_axis();
    let h = grid.spacing();
    // inv[j][m] = (2L)^{-1} Σ_k F(y_j, ξ_k) e^{i x_m ξ_k}
    let inv: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut buf = big_f.row(j).to_vec();
            if buf.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                return buf;
            }
            field::transform(&grid, &mut buf, true);
            buf
        })
        .collect();
    let (r, table) = window.offset_table(h, WINDOW_EPS);
    let out: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|m| {
            let lo = m.saturating_sub(r);
            let hi = (m + r).min(n - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in lo..=hi {
                acc += table[m + r - j] * inv[j][m];
            }
            acc * h
        })
        .collect();
    Ok(SampledField::from_parts(grid, Domain::Space, out, big_f.tail_tol))
}

/// Ratio of ‖V_{g(s)} V_{g(t)}* F‖ to ‖F‖ in L^p_x L^q_ξ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbiguityReport {
    pub s: f64,
    pub t: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

pub fn cross_ambiguity_bound_check(
    s: f64,
    t: f64,
    big_f: &PhaseSpaceField,
    p: f64,
    q: f64,
    window: &Window,
) -> Result<AmbiguityReport> {
    let gs = evolved_window(window, s)?;
    let gt = evolved_window(window, t)?;
    let denominator = norms::mixed_norm(big_f, p, q)?;
    if denominator == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let synth = adjoint_stft(big_f, &gt)?;
    let back = stft(&synth, &gs)?;
    let numerator = norms::mixed_norm(&back, p, q)?;
    Ok(AmbiguityReport { s, t, numerator, denominator, ratio: numerator / denominator })
}

/// One closed-form phase-space building block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseSpaceAtom {
    /// c·V_g[M_{ξ₀}T_{x₀} g](x, ξ) = c·e^{-(x-x₀)²/4 - (ξ-ξ₀)²/4 - i(ξ-ξ₀)(x+x₀)/2} for the unit window.
    Coherent { x0: f64, xi0: f64, c: Complex64 },
    /// c·exp(-(x-x₀)²/(2wₓ²) - (ξ-ξ₀)²/(2w_ξ²) + i·κ·(x-x₀)(ξ-ξ₀) + i·k·x); generally outside the STFT range.
    Bump { x0: f64, xi0: f64, wx: f64, wxi: f64, chirp: f64, kx: f64, c: Complex64 },
}

impl PhaseSpaceAtom {
    pub fn eval(&self, x: f64, xi: f64) -> Complex64 {
        match *self {
            PhaseSpaceAtom::Coherent { x0, xi0, c } => {
                let (dx, dk) = (x - x0, xi - xi0);
                c * Complex64::new(-dx * dx / 4.0 - dk * dk / 4.0, -dk * (x + x0) / 2.0).exp()
            }
            PhaseSpaceAtom::Bump { x0, xi0, wx, wxi, chirp, kx, c } => {
                let (dx, dk) = (x - x0, xi - xi0);
                let re = -dx * dx / (2.0 * wx * wx) - dk * dk / (2.0 * wxi * wxi);
                c * Complex64::new(re, chirp * dx * dk + kx * x).exp()
            }
        }
    }

    /// Box outside of which the atom is below `eps` relative.
    pub fn extent(&self, eps: f64) -> (f64, f64, f64, f64) {
        let l = (1.0 / eps).ln();
        match *self {
            PhaseSpaceAtom::Coherent { x0, xi0, .. } => {
                let r = 2.0 * l.sqrt();
                (x0 - r, x0 + r, xi0 - r, xi0 + r)
            }
            PhaseSpaceAtom::Bump { x0, xi0, wx, wxi, .. } => {
                let (rx, rk) = (wx * (2.0 * l).sqrt(), wxi * (2.0 * l).sqrt());
                (x0 - rx, x0 + rx, xi0 - rk, xi0 + rk)
            }
        }
    }
}

/// Finite superposition of phase-space atoms.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PhaseSpaceForm {
    pub atoms: Vec<PhaseSpaceAtom>,
}

impl PhaseSpaceForm {
    pub fn new(atoms: Vec<PhaseSpaceAtom>) -> Self {
        PhaseSpaceForm { atoms }
    }

    pub fn eval(&self, x: f64, xi: f64) -> Complex64 {
        self.atoms.iter().map(|a| a.eval(x, xi)).sum()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| match *a {
                PhaseSpaceAtom::Coherent { x0, xi0, c: c0 } => PhaseSpaceAtom::Coherent { x0, xi0, c: c0 * c },
                PhaseSpaceAtom::Bump { x0, xi0, wx, wxi, chirp, kx, c: c0 } => {
                    PhaseSpaceAtom::Bump { x0, xi0, wx, wxi, chirp, kx, c: c0 * c }
                }
            })
            .collect();
        PhaseSpaceForm { atoms }
    }

    /// Bounding box (x_lo, x_hi, ξ_lo, ξ_hi) of all atoms at relative level `eps`.
    pub fn extent(&self, eps: f64) -> (f64, f64, f64, f64) {
        self.atoms.iter().map(|a| a.extent(eps)).fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |acc, e| (acc.0.min(e.0), acc.1.max(e.1), acc.2.min(e.2), acc.3.max(e.3)),
        )
    }

    pub fn sample(&self, grid: &GridSpec) -> Result<PhaseSpaceField> {
        let n = grid.points_per_axis();
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| self.eval(grid.coord(idx / n), grid.freq(idx % n)))
            .collect();
        PhaseSpaceField::new(*grid, values)
    }

    /// `count` coherent states with centers uniform in [-a, a]² and unit-modulus random phases.
    pub fn random_coherent<R: Rng>(rng: &mut R, count: usize, a: f64) -> Self {
        let atoms = (0..count)
            .map(|_| PhaseSpaceAtom::Coherent {
                x0: rng.gen_range(-a..a),
                xi0: rng.gen_range(-a..a),
                c: Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)),
            })
            .collect();
        PhaseSpaceForm { atoms }
    }

    /// `count` generic bumps with widths in [0.6, 1.6], chirps in [-0.5, 0.5].
    pub fn random_bumps<R: Rng>(rng: &mut R, count: usize, a: f64) -> Self {
        let atoms = (0..count)
            .map(|_| PhaseSpaceAtom::Bump {
                x0: rng.gen_range(-a..a),
                xi0: rng.gen_range(-a..a),
                wx: rng.gen_range(0.6..1.6),
                wxi: rng.gen_range(0.6..1.6),
                chirp: rng.gen_range(-0.5..0.5),
                kx: rng.gen_range(-1.0..1.0),
                c: Complex64::from_polar(rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)),
            })
            .collect();
        PhaseSpaceForm { atoms }
    }
}
