//! Phase-space lattices for the transport operators.
//!
//! Lattice data F(x_a, η_b) lives on a sub-lattice of the grid × dual grid with
//! power-of-two hops. Synthesis V_{g(t)}* F runs one inverse FFT per x-node
//! over the η-column, and analysis evaluates V_{g(s)}u (optionally weighted by
//! the Taylor remainder of V) at arbitrary phase-space points by a direct
//! Riemann sum on a decimated grid using a Gaussian-chirp recurrence.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{fourier, GridSpec, SampledField};
use crate::hamflow::flow_endpoint;
use crate::potentials::Potential;
use crate::stft::{Window, WINDOW_EPS};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Relative amplitude below which field samples count as outside the support.
pub const SUPPORT_EPS: f64 = 1e-14;
/// Largest x-spacing of synthesis lattices.
pub const DX_MAX: f64 = 0.3;
/// Extra period (beyond twice the window radius) required of η-columns.
const PERIOD_MARGIN: f64 = 8.0;
/// Extra band allowed for when decimating analysis grids.
const BAND_MARGIN: f64 = 2.0;
/// Chirp recurrence restarts every this many samples.
const RESEED: usize = 32;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Axis-aligned box [x0, x1] × [k0, k1] in phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseBox {
    pub x0: f64,
    pub x1: f64,
    pub k0: f64,
    pub k1: f64,
}

impl PhaseBox {
    pub fn contains(&self, x: f64, k: f64) -> bool {
        x >= self.x0 && x <= self.x1 && k >= self.k0 && k <= self.k1
    }

    pub fn union(&self, o: &PhaseBox) -> PhaseBox {
        PhaseBox { x0: self.x0.min(o.x0), x1: self.x1.max(o.x1), k0: self.k0.min(o.k0), k1: self.k1.max(o.k1) }
    }

    pub fn expanded(&self, dx: f64, dk: f64) -> PhaseBox {
        PhaseBox { x0: self.x0 - dx, x1: self.x1 + dx, k0: self.k0 - dk, k1: self.k1 + dk }
    }

    fn boundary(&self, per_side: usize) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(4 * per_side);
        for i in 0..per_side {
            let s = i as f64 / per_side as f64;
            let x = self.x0 + s * (self.x1 - self.x0);
            let k = self.k0 + s * (self.k1 - self.k0);
            pts.push((x, self.k0));
            pts.push((self.x1 - (x - self.x0), self.k1));
            pts.push((self.x0, self.k1 - (k - self.k0)));
            pts.push((self.x1, k));
        }
        pts
    }
}

/// Coordinates of the first and last samples with |v| > SUPPORT_EPS·max (1D).
fn support(coords: impl Fn(usize) -> f64, values: &[Complex64]) -> Option<(f64, f64)> {
    let top = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return None;
    }
    let cut = SUPPORT_EPS * top;
    let first = values.iter().position(|v| v.norm() > cut)?;
    let last = values.iter().rposition(|v| v.norm() > cut)?;
    Some((coords(first), coords(last)))
}

/// Essential support in x and band in ξ of a 1D field.
pub(crate) fn field_extent(u: &SampledField) -> Option<((f64, f64), (f64, f64))> {
    let grid = u.grid();
    let xs = support(|m| grid.coord(m), u.values())?;
    let spec = fourier(u);
    let ks = support(|i| grid.freq(i), spec.values())?;
    Some((xs, ks))
}

/// Phase-space box outside which V_g u is negligible.
pub(crate) fn essential_box(extent: ((f64, f64), (f64, f64)), window: &Window) -> PhaseBox {
    let ((a, b), (c, d)) = extent;
    let r = window.radius(WINDOW_EPS);
    let rk = Window::fourier_radius(WINDOW_EPS);
    PhaseBox { x0: a - r, x1: b + r, k0: c - rk, k1: d + rk }
}

/// Bounding box of Φ(τ) applied to a box, from its flowed boundary.
pub(crate) fn flowed_box(potential: &Potential, b: &PhaseBox, tau: f64, dt: f64) -> PhaseBox {
    if tau == 0.0 {
        return *b;
    }
    let pts: Vec<(f64, f64)> = b.boundary(256).par_iter().map(|&(x, k)| flow_endpoint(potential, tau, x, k, dt)).collect();
    let mut out = PhaseBox { x0: f64::INFINITY, x1: f64::NEG_INFINITY, k0: f64::INFINITY, k1: f64::NEG_INFINITY };
    let mut gap: f64 = 0.0;
    for (i, &(x, k)) in pts.iter().enumerate() {
        out.x0 = out.x0.min(x);
        out.x1 = out.x1.max(x);
        out.k0 = out.k0.min(k);
        out.k1 = out.k1.max(k);
        // i + 4 is the next sample on the same side; no wrap back to the side's start
        if let Some(&(px, pk)) = pts.get(i + 4) {
            gap = gap.max((px - x).abs()).max((pk - k).abs());
        }
    }
    out.expanded(gap + 0.25, gap + 0.25)
}

/// Evaluates ∫ [Rem(x, y)] conj(g(y - x)) u(y) e^{-iyξ} dy at arbitrary (x, ξ).
pub(crate) struct Analyzer<'a> {
    y0: f64,
    hy: f64,
    vals: Vec<Complex64>,
    lo: usize,
    hi: usize,
    a_conj: Complex64,
    beta: Complex64,
    chirp: Complex64,
    radius: f64,
    remainder: Option<(&'a Potential, Vec<f64>)>,
    region: PhaseBox,
}

impl<'a> Analyzer<'a> {
    /// None when u vanishes. With `remainder`, the integrand carries Rem(x, y).
    pub(crate) fn new(u: &SampledField, window: &Window, remainder: Option<&'a Potential>) -> Result<Option<Self>> {
        let grid = *u.grid();
        if grid.dim() != 1 {
            return Err(Error::Unsupported("phase-space transport is one-dimensional".into()));
        }
        let Some(extent) = field_extent(u) else { return Ok(None) };
        let region = essential_box(extent, window);
        let band = extent.1 .0.abs().max(extent.1 .1.abs()) + Window::fourier_radius(WINDOW_EPS) + BAND_MARGIN;
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let mut stride = 1;
        while n % (2 * stride) == 0 && 2.0 * stride as f64 * h <= PI / band && 2 * stride <= n / 8 {
            stride *= 2;
        }
        let hy = stride as f64 * h;
        let vals: Vec<Complex64> = u.values().iter().step_by(stride).copied().collect();
        let top = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let cut = SUPPORT_EPS * 1e-2 * top;
        let lo = vals.iter().position(|v| v.norm() > cut).unwrap_or(0);
        let hi = vals.iter().rposition(|v| v.norm() > cut).unwrap_or(0);
        let y0 = -grid.half_width();
        let (a, b) = window.coeffs();
        let beta = b.conj();
        let remainder = remainder.map(|p| {
            let vy = (0..vals.len()).map(|m| p.value(y0 + m as f64 * hy)).collect();
            (p, vy)
        });
        Ok(Some(Analyzer {
            y0,
            hy,
            vals,
            lo,
            hi,
            a_conj: a.conj(),
            beta,
            chirp: (-beta * hy * hy).exp(),
            radius: window.radius(WINDOW_EPS),
            remainder,
            region,
        }))
    }

    /// Box outside which the analysis output is negligible.
    pub(crate) fn region(&self) -> &PhaseBox {
        &self.region
    }

    pub(crate) fn eval(&self, x: f64, xi: f64) -> Complex64 {
        let first = ((x - self.radius - self.y0) / self.hy).ceil().max(self.lo as f64);
        let last = ((x + self.radius - self.y0) / self.hy).floor().min(self.hi as f64);
        if first > last {
            return ZERO;
        }
        let (first, last) = (first as usize, last as usize);
        let hy = self.hy;
        let rem = self.remainder.as_ref().map(|(p, vy)| (p.value(x), p.grad(x), vy));
        let mut acc = ZERO;
        let mut m = first;
        while m <= last {
            let y = self.y0 + m as f64 * hy;
            let d = y - x;
            let mut w = self.a_conj * (-self.beta * (0.5 * d * d) - Complex64::new(0.0, y * xi)).exp();
            let mut rho = (-self.beta * (d * hy + 0.5 * hy * hy) - Complex64::new(0.0, hy * xi)).exp();
            let end = (m + RESEED).min(last + 1);
            match &rem {
                None => {
                    for v in &self.vals[m..end] {
                        acc += w * v;
                        w *= rho;
                        rho *= self.chirp;
                    }
                }
                Some((vx, dvx, vy)) => {
                    for k in m..end {
                        let yk = self.y0 + k as f64 * hy;
                        let r = vy[k] - vx - dvx * (yk - x);
                        acc += w * self.vals[k] * r;
                        w *= rho;
                        rho *= self.chirp;
                    }
                }
            }
            m = end;
        }
        acc * hy
    }
}

/// Sub-lattice of grid × dual grid with power-of-two hops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SynthesisLattice {
    pub grid: GridSpec,
    pub x_hop: usize,
    pub xi_hop: usize,
}

impl SynthesisLattice {
    /// Coarsest hops with Δx ≤ DX_MAX and η-period at least 2·r_max + margin.
    pub(crate) fn choose(grid: &GridSpec, r_max: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::Unsupported("phase-space transport is one-dimensional".into()));
        }
        let n = grid.points_per_axis();
        let h = grid.spacing();
        let period = 2.0 * r_max + PERIOD_MARGIN;
        if (n as f64) * h < period {
            return Err(Error::InvalidGrid(format!("domain 2L = {} shorter than window period {period}", 2.0 * grid.half_width())));
        }
        let mut x_hop = 1;
        while n % (2 * x_hop) == 0 && 2.0 * x_hop as f64 * h <= DX_MAX {
            x_hop *= 2;
        }
        let mut xi_hop = 1;
        while (n / 2) % (2 * xi_hop) == 0 && (n / (2 * xi_hop)) as f64 * h >= period {
            xi_hop *= 2;
        }
        Ok(SynthesisLattice { grid: *grid, x_hop, xi_hop })
    }

    pub(crate) fn n_x(&self) -> usize {
        self.grid.points_per_axis() / self.x_hop
    }
    pub(crate) fn n_xi(&self) -> usize {
        self.grid.points_per_axis() / self.xi_hop
    }
    pub(crate) fn x(&self, a: usize) -> f64 {
        self.grid.coord(a * self.x_hop)
    }
    pub(crate) fn eta(&self, b: usize) -> f64 {
        self.grid.freq(b * self.xi_hop)
    }
    pub(crate) fn dx(&self) -> f64 {
        self.x_hop as f64 * self.grid.spacing()
    }
    pub(crate) fn deta(&self) -> f64 {
        self.xi_hop as f64 * self.grid.dual_spacing()
    }

    /// Node indices whose coordinates lie in the box (clipped to the lattice).
    pub(crate) fn ranges(&self, b: &PhaseBox) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let clip = |lo: f64, hi: f64, start: f64, step: f64, count: usize| {
            let a = ((lo - start) / step).ceil().max(0.0) as usize;
            let z = ((hi - start) / step).floor();
            if z < 0.0 {
                return 0..0;
            }
            a..((z as usize) + 1).min(count)
        };
        let xs = clip(b.x0, b.x1, self.x(0), self.dx(), self.n_x());
        let ks = clip(b.k0, b.k1, self.eta(0), self.deta(), self.n_xi());
        if xs.is_empty() || ks.is_empty() {
            None
        } else {
            Some((xs, ks))
        }
    }
}

/// One η-column of lattice data at x-node `a`.
pub(crate) struct Column {
    pub a: usize,
    pub values: Vec<Complex64>,
}

/// Σ_{a,b} g(t, y - x_a) [K(x_a, y)] F(x_a, η_b) e^{iyη_b} Δx Δη / 2π on the grid,
/// with K = -Rem when a potential is given. Accumulated in column order.
pub(crate) fn synthesize(
    lat: &SynthesisLattice,
    columns: &[Column],
    window: &Window,
    kernel: Option<&Potential>,
) -> Vec<Complex64> {
    let grid = &lat.grid;
    let n = grid.points_per_axis();
    let n_xi = lat.n_xi();
    let (reach, table) = window.offset_table(grid.spacing(), WINDOW_EPS);
    assert!(2 * reach < n_xi, "η-period too short for the window");
    let weight = lat.dx() * lat.deta() / (2.0 * PI);
    let half_parity = (n / 2) % 2;
    let vy: Option<Vec<f64>> = kernel.map(|p| (0..n).map(|m| p.value(grid.coord(m))).collect());
    let pieces: Vec<(usize, Vec<Complex64>)> = columns
        .par_iter()
        .map(|col| {
            let mut buf = col.values.clone();
            if lat.xi_hop % 2 == 1 {
                for v in buf.iter_mut().skip(1).step_by(2) {
                    *v = -*v;
                }
            }
            fft::inverse(&mut buf);
            let ja = col.a * lat.x_hop;
            let xa = grid.coord(ja);
            let start = ja.saturating_sub(reach);
            let stop = (ja + reach).min(n - 1);
            let kern = kernel.map(|p| (p.value(xa), p.grad(xa)));
            let seg = (start..=stop)
                .map(|m| {
                    let mut v = buf[m % n_xi] * table[m + reach - ja] * weight;
                    if (half_parity + m) % 2 == 1 {
                        v = -v;
                    }
                    if let (Some((va, dva)), Some(vy)) = (kern, vy.as_ref()) {
                        v *= -(vy[m] - va - dva * (grid.coord(m) - xa));
                    }
                    v
                })
                .collect();
            (start, seg)
        })
        .collect();
    let mut out = vec![ZERO; n];
    for (start, seg) in pieces {
        for (o, v) in out[start..].iter_mut().zip(seg) {
            *o += v;
        }
    }
    out
}
