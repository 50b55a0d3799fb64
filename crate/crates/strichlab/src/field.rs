//! Truncated periodic grids over ℝⁿ, sampled fields, Riemann-weighted
//! norms and the continuum-convention discrete Fourier transform
//! f̂(ξ) = ∫ f(x) e^{-ixξ} dx, with inverse (2π)^{-n} ∫ f̂(ξ) e^{ixξ} dξ.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Default boundary-mass tolerance for decay certificates.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// The torus [-L, L)ⁿ with N points per axis, x_m = -L + m·h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N = {points} must be even and at least 8")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half-width L = {half_width} must be positive")));
        }
        Ok(GridSpec { dim, half_width, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.points
    }
    /// Total number of samples, Nⁿ.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }
    pub fn dual_spacing(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }
    /// Largest representable frequency magnitude, π/h.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
    pub fn dual_cell_volume(&self) -> f64 {
        self.dual_spacing().powi(self.dim as i32)
    }
    /// Coordinate of axis index m.
    pub fn coord(&self, m: usize) -> f64 {
        -self.half_width + m as f64 * self.spacing()
    }
    /// Frequency of centered index i, ξ = (i - N/2)·π/L.
    pub fn freq(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.dual_spacing()
    }
    /// Axis coordinates of flat index `idx`, written into `out` (length dim).
    pub fn point(&self, idx: usize, out: &mut [f64]) {
        match self.dim {
            1 => out[0] = self.coord(idx),
            _ => {
                out[0] = self.coord(idx / self.points);
                out[1] = self.coord(idx % self.points);
            }
        }
    }
    pub fn freq_point(&self, idx: usize, out: &mut [f64]) {
        match self.dim {
            1 => out[0] = self.freq(idx),
            _ => {
                out[0] = self.freq(idx / self.points);
                out[1] = self.freq(idx % self.points);
            }
        }
    }
    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|m| self.coord(m)).collect()
    }
    pub fn freqs(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.freq(i)).collect()
    }
    /// Same physical domain with the resolution doubled.
    pub fn refined(&self) -> GridSpec {
        GridSpec { points: 2 * self.points, ..*self }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, N={}, L={})", self.dim, self.points, self.half_width)
    }
}

pub fn make_grid(dim: usize, points: usize, half_width: f64) -> Result<GridSpec> {
    GridSpec::new(dim, points, half_width)
}

/// Whether samples live on the position grid or on the dual (frequency) grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Space,
    Frequency,
}

/// Complex samples on a grid together with their boundary-mass certificate.
#[derive(Clone, Debug)]
pub struct SampledField {
    grid: GridSpec,
    domain: Domain,
    values: Vec<Complex64>,
    tail: f64,
    tail_tol: f64,
}

impl SampledField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        Self::with_domain(grid, Domain::Space, values)
    }

    pub fn with_domain(grid: GridSpec, domain: Domain, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self::from_parts(grid, domain, values, DEFAULT_TAIL_TOL))
    }

    pub(crate) fn from_parts(grid: GridSpec, domain: Domain, values: Vec<Complex64>, tail_tol: f64) -> Self {
        let tail = boundary_fraction(&grid, &values);
        SampledField { grid, domain, values, tail, tail_tol }
    }

    /// Same grid, domain and tolerance, new values.
    pub(crate) fn derived(&self, values: Vec<Complex64>) -> Self {
        Self::from_parts(self.grid, self.domain, values, self.tail_tol)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_parts(grid, Domain::Space, vec![Complex64::new(0.0, 0.0); grid.len()], DEFAULT_TAIL_TOL)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
    /// Fraction of |values|² lying within a quarter of the domain from its boundary.
    pub fn tail_fraction(&self) -> f64 {
        self.tail
    }
    pub fn tail_tolerance(&self) -> f64 {
        self.tail_tol
    }
    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    /// Fail unless the boundary mass fraction is within tolerance.
    pub fn require_decay(&self) -> Result<()> {
        if self.tail > self.tail_tol {
            let fraction = self.tail;
            return Err(match self.domain {
                Domain::Space => Error::DecayViolation { fraction, tolerance: self.tail_tol },
                Domain::Frequency => Error::BandViolation { fraction, tolerance: self.tail_tol },
            });
        }
        Ok(())
    }

    /// Mass fraction of the transform in the outer quarter of the band.
    pub fn band_fraction(&self) -> f64 {
        match self.domain {
            Domain::Space => fourier(self).tail,
            Domain::Frequency => inv_fourier(self).tail,
        }
    }

    pub fn require_band(&self) -> Result<()> {
        let fraction = self.band_fraction();
        if fraction > self.tail_tol {
            return Err(Error::BandViolation { fraction, tolerance: self.tail_tol });
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        match self.domain {
            Domain::Space => self.grid.cell_volume(),
            Domain::Frequency => self.grid.dual_cell_volume(),
        }
    }

    pub fn norm_l2(&self) -> f64 {
        lp_norm(self, 2.0).expect("p = 2 is valid")
    }

    pub fn scale(&self, c: Complex64) -> SampledField {
        self.derived(self.values.iter().map(|v| v * c).collect())
    }

    /// self + c·other.
    pub fn axpy(&self, c: Complex64, other: &SampledField) -> Result<SampledField> {
        self.check_same(other)?;
        Ok(self.derived(self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect()))
    }

    pub fn sub(&self, other: &SampledField) -> Result<SampledField> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// ‖self - other‖₂ / ‖other‖₂.
    pub fn rel_l2_error(&self, reference: &SampledField) -> Result<f64> {
        let d = self.sub(reference)?.norm_l2();
        let r = reference.norm_l2();
        if r == 0.0 {
            return Ok(d);
        }
        Ok(d / r)
    }

    pub fn max_abs_diff(&self, other: &SampledField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub(crate) fn check_same(&self, other: &SampledField) -> Result<()> {
        if self.grid != other.grid || self.domain != other.domain {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Fraction of |v|² at distance < L/4 from the boundary of the cube (any axis).
fn boundary_fraction(grid: &GridSpec, values: &[Complex64]) -> f64 {
    let n = grid.points_per_axis();
    // index m is in the outer quarter iff |x_m| >= 3L/4, i.e. m <= N/8 or m >= 7N/8
    let lo = n / 8;
    let hi = n - n / 8;
    let outer = |m: usize| m <= lo || m >= hi;
    let mut total = 0.0;
    let mut edge = 0.0;
    for (idx, v) in values.iter().enumerate() {
        let w = v.norm_sqr();
        total += w;
        let is_edge = match grid.dim() {
            1 => outer(idx),
            _ => outer(idx / n) || outer(idx % n),
        };
        if is_edge {
            edge += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        edge / total
    }
}

/// Evaluator type for custom closed forms.
pub type PointFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Analytic test functions.
#[derive(Clone)]
pub enum ClosedForm {
    /// amplitude · exp(-|x - c|²/(2σ²))
    Gaussian { center: Vec<f64>, sigma: f64, amplitude: Complex64 },
    /// amplitude · exp(-|x - c|²/(2σ²)) · exp(i ξ₀·x)
    ModulatedGaussian { center: Vec<f64>, sigma: f64, momentum: Vec<f64>, amplitude: Complex64 },
    Custom { label: String, eval: PointFn },
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClosedForm::Gaussian { center, sigma, amplitude } => {
                write!(f, "Gaussian(c={center:?}, σ={sigma}, a={amplitude})")
            }
            ClosedForm::ModulatedGaussian { center, sigma, momentum, amplitude } => {
                write!(f, "ModulatedGaussian(c={center:?}, σ={sigma}, ξ₀={momentum:?}, a={amplitude})")
            }
            ClosedForm::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl ClosedForm {
    pub fn gaussian(center: f64, sigma: f64) -> Self {
        ClosedForm::Gaussian { center: vec![center], sigma, amplitude: Complex64::new(1.0, 0.0) }
    }

    pub fn modulated(center: f64, sigma: f64, momentum: f64) -> Self {
        ClosedForm::ModulatedGaussian {
            center: vec![center],
            sigma,
            momentum: vec![momentum],
            amplitude: Complex64::new(1.0, 0.0),
        }
    }

    /// π^{-n/4} e^{-|x|²/2}, unit L² norm.
    pub fn unit_gaussian(dim: usize) -> Self {
        ClosedForm::Gaussian {
            center: vec![0.0; dim],
            sigma: 1.0,
            amplitude: Complex64::new(std::f64::consts::PI.powf(-(dim as f64) / 4.0), 0.0),
        }
    }

    /// Gaussian of width σ with unit L² norm in dimension `dim`.
    pub fn normalized(center: Vec<f64>, sigma: f64, momentum: Vec<f64>) -> Self {
        let dim = center.len() as f64;
        let amp = (std::f64::consts::PI * sigma * sigma).powf(-dim / 4.0);
        ClosedForm::ModulatedGaussian { center, sigma, momentum, amplitude: Complex64::new(amp, 0.0) }
    }

    pub fn custom(label: impl Into<String>, eval: PointFn) -> Self {
        ClosedForm::Custom { label: label.into(), eval }
    }

    pub fn with_amplitude(self, a: Complex64) -> Self {
        match self {
            ClosedForm::Gaussian { center, sigma, .. } => ClosedForm::Gaussian { center, sigma, amplitude: a },
            ClosedForm::ModulatedGaussian { center, sigma, momentum, .. } => {
                ClosedForm::ModulatedGaussian { center, sigma, momentum, amplitude: a }
            }
            other => other,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let (center, sigma, momentum) = match self {
            ClosedForm::Gaussian { center, sigma, .. } => (center, *sigma, None),
            ClosedForm::ModulatedGaussian { center, sigma, momentum, .. } => (center, *sigma, Some(momentum)),
            ClosedForm::Custom { .. } => return Ok(()),
        };
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("width σ = {sigma} must be positive")));
        }
        if center.len() != dim || momentum.is_some_and(|m| m.len() != dim) {
            return Err(Error::InvalidArgument("closed-form parameters do not match grid dimension".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self {
            ClosedForm::Gaussian { center, sigma, amplitude } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            ClosedForm::ModulatedGaussian { center, sigma, momentum, amplitude } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let phase: f64 = x.iter().zip(momentum).map(|(a, k)| a * k).sum();
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp() * Complex64::from_polar(1.0, phase)
            }
            ClosedForm::Custom { eval, .. } => eval(x),
        }
    }
}

/// Pointwise evaluation with the default decay tolerance.
pub fn sample(grid: &GridSpec, form: &ClosedForm) -> Result<SampledField> {
    sample_with_tol(grid, form, DEFAULT_TAIL_TOL)
}

/// Pointwise evaluation; fails if either the spatial or the band certificate exceeds `tol`.
pub fn sample_with_tol(grid: &GridSpec, form: &ClosedForm, tol: f64) -> Result<SampledField> {
    form.validate(grid.dim())?;
    let mut x = vec![0.0; grid.dim()];
    let values: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            grid.point(idx, &mut x);
            form.eval(&x)
        })
        .collect();
    let field = SampledField::with_domain(*grid, Domain::Space, values)?.with_tail_tolerance(tol);
    field.require_decay()?;
    field.require_band()?;
    Ok(field)
}

/// hⁿ Σ conj(f)·g.
pub fn inner_product(f: &SampledField, g: &SampledField) -> Result<Complex64> {
    f.check_same(g)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.weight())
}

/// (hⁿ Σ |f|^p)^{1/p}; p = ∞ is the max modulus.
pub fn lp_norm(f: &SampledField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("p = {p} < 1")));
    }
    Ok(lp_of(f.values.iter().map(|v| v.norm()), p, f.weight()))
}

/// Weighted ℓ^p norm of nonnegative magnitudes with a common cell weight.
pub(crate) fn lp_of(mags: impl Iterator<Item = f64>, p: f64, weight: f64) -> f64 {
    if p.is_infinite() {
        return mags.fold(0.0, f64::max);
    }
    if p == 1.0 {
        return mags.sum::<f64>() * weight;
    }
    if p == 2.0 {
        return (mags.map(|a| a * a).sum::<f64>() * weight).sqrt();
    }
    (mags.map(|a| a.powf(p)).sum::<f64>() * weight).powf(1.0 / p)
}

/// Continuum-normalized forward transform; output on the dual grid in centered order.
pub fn fourier(f: &SampledField) -> SampledField {
    let grid = f.grid;
    let mut buf = f.values.clone();
    transform(&grid, &mut buf, false);
    SampledField::from_parts(grid, Domain::Frequency, buf, f.tail_tol)
}

/// Inverse of [`fourier`].
pub fn inv_fourier(fh: &SampledField) -> SampledField {
    let grid = fh.grid;
    let mut buf = fh.values.clone();
    transform(&grid, &mut buf, true);
    SampledField::from_parts(grid, Domain::Space, buf, fh.tail_tol)
}

/// In-place centered transform. Forward: F(ξ_k) = h (-1)^k DFT(k mod N) per axis;
/// inverse: f(x_m) = (2L)^{-1} Σ_k (-1)^k F_k e^{2πimk/N}.
pub(crate) fn transform(grid: &GridSpec, buf: &mut [Complex64], inverse: bool) {
    let n = grid.points_per_axis();
    let half = n / 2;
    // (-1)^k for centered index i with k = i - N/2
    let sign = |i: usize| if (i + half) % 2 == 0 { 1.0 } else { -1.0 };
    match grid.dim() {
        1 => {
            if inverse {
                let mut tmp = vec![Complex64::new(0.0, 0.0); n];
                for i in 0..n {
                    tmp[(i + half) % n] = buf[i] * sign(i);
                }
                fft::inverse(&mut tmp);
                let w = 1.0 / (2.0 * grid.half_width());
                for (b, t) in buf.iter_mut().zip(&tmp) {
                    *b = t * w;
                }
            } else {
                fft::forward(buf);
                let h = grid.spacing();
                let tmp = buf.to_vec();
                for i in 0..n {
                    buf[i] = tmp[(i + half) % n] * (h * sign(i));
                }
            }
        }
        _ => {
            if inverse {
                let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
                for i in 0..n {
                    for j in 0..n {
                        tmp[((i + half) % n) * n + (j + half) % n] = buf[i * n + j] * (sign(i) * sign(j));
                    }
                }
                fft::transform_2d(&mut tmp, n, true);
                let w = (1.0 / (2.0 * grid.half_width())).powi(2);
                for (b, t) in buf.iter_mut().zip(&tmp) {
                    *b = t * w;
                }
            } else {
                fft::transform_2d(buf, n, false);
                let h2 = grid.cell_volume();
                let tmp = buf.to_vec();
                for i in 0..n {
                    for j in 0..n {
                        buf[i * n + j] = tmp[((i + half) % n) * n + (j + half) % n] * (h2 * sign(i) * sign(j));
                    }
                }
            }
        }
    }
}
