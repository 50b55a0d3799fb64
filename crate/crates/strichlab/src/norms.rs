//! Mixed Lebesgue norms on phase space, Lorentz quasi-norms by exact
//! integration of the decreasing rearrangement, and Wiener amalgam norms
//! ‖f‖_{W^{p,q}} = ‖ ‖V_g f(x, ·)‖_{L^q_ξ} ‖_{L^p_x}.

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{lp_of, Domain, GridSpec, SampledField};
use crate::stft::{PhaseSpaceField, Window, WINDOW_EPS};
use num_complex::Complex64;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::f64::consts::PI;

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidExponent(format!("{name} = {p} must lie in [1, ∞]")));
    }
    Ok(())
}

/// Hölder conjugate p/(p-1), with 1 ↔ ∞.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// Inner L^q over ξ (weight π/L), then outer L^p over x (weight h).
pub fn mixed_norm(big_f: &PhaseSpaceField, p_x: f64, q_xi: f64) -> Result<f64> {
    check_exponent("p_x", p_x)?;
    check_exponent("q_ξ", q_xi)?;
    let grid = big_f.grid();
    let n = grid.points_per_axis();
    let dxi = grid.dual_spacing();
    let inner: Vec<f64> =
        (0..n).into_par_iter().map(|j| lp_of(big_f.row(j).iter().map(|v| v.norm()), q_xi, dxi)).collect();
    Ok(lp_of(inner.into_iter(), p_x, grid.spacing()))
}

/// (magnitude, cell measure) pairs whose decreasing rearrangement is a step function.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSamples {
    pairs: Vec<(f64, f64)>,
}

impl WeightedSamples {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, m) in &pairs {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("magnitude {a} must be finite and ≥ 0")));
            }
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidArgument(format!("cell measure {m} must be finite and > 0")));
            }
        }
        Ok(WeightedSamples { pairs })
    }

    /// Every magnitude carries the same cell measure.
    pub fn uniform(mags: impl IntoIterator<Item = f64>, cell: f64) -> Result<Self> {
        Self::new(mags.into_iter().map(|a| (a, cell)).collect())
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }
}

/// ‖f‖_{L^{p,q}} = ((q/p)∫₀^∞ [t^{1/p} f*(t)]^q dt/t)^{1/q}, evaluated exactly on the
/// steps of f*: Σ a_i^q (c_i^{q/p} - c_{i-1}^{q/p}) with c_i the cumulative measures.
pub fn lorentz_norm(ws: &WeightedSamples, p: f64, q: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidExponent(format!("Lorentz p = {p} must exceed 1")));
    }
    check_exponent("Lorentz q", q)?;
    let mut order: Vec<usize> = (0..ws.pairs.len()).collect();
    // descending magnitude, ties by original index
    order.sort_by(|&i, &j| ws.pairs[j].0.partial_cmp(&ws.pairs[i].0).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    lorentz_sorted(order.iter().map(|&i| ws.pairs[i]), p, q)
}

/// Lorentz quasi-norm of an already decreasing sequence of (magnitude, measure).
fn lorentz_sorted(steps: impl Iterator<Item = (f64, f64)>, p: f64, q: f64) -> Result<f64> {
    if q.is_infinite() {
        let mut c = 0.0;
        let mut best: f64 = 0.0;
        for (a, m) in steps {
            c += m;
            let v = if p.is_infinite() { a } else { a * c.powf(1.0 / p) };
            best = best.max(v);
        }
        return Ok(best);
    }
    if p.is_infinite() {
        // ∫ f*^q dt/t diverges at 0 unless f vanishes
        let nonzero = steps.into_iter().any(|(a, _)| a > 0.0);
        return Ok(if nonzero { f64::INFINITY } else { 0.0 });
    }
    let e = q / p;
    let mut c_prev: f64 = 0.0;
    let mut sum = 0.0;
    for (a, m) in steps {
        if a == 0.0 {
            break;
        }
        let growth = if c_prev == 0.0 { m.powf(e) } else { c_prev.powf(e) * (e * (m / c_prev).ln_1p()).exp_m1() };
        sum += a.powf(q) * growth;
        c_prev += m;
    }
    Ok(sum.powf(1.0 / q))
}

/// Lorentz norm of magnitudes sharing one cell measure (sorts in place).
pub(crate) fn lorentz_uniform(mags: &mut [f64], cell: f64, p: f64, q: f64) -> Result<f64> {
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    lorentz_sorted(mags.iter().map(|&a| (a, cell)), p, q)
}

/// The inner (frequency-side) norm of an amalgam-type norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerNorm {
    Lebesgue { q: f64 },
    Lorentz { p: f64, q: f64 },
}

impl InnerNorm {
    fn validate(&self) -> Result<()> {
        match *self {
            InnerNorm::Lebesgue { q } => check_exponent("q", q),
            InnerNorm::Lorentz { p, q } => {
                if !(p > 1.0) {
                    return Err(Error::InvalidExponent(format!("Lorentz p = {p} must exceed 1")));
                }
                check_exponent("Lorentz q", q)
            }
        }
    }

    fn apply(&self, mags: &mut [f64], cell: f64) -> Result<f64> {
        match *self {
            InnerNorm::Lebesgue { q } => Ok(lp_of(mags.iter().copied(), q, cell)),
            InnerNorm::Lorentz { p, q } => lorentz_uniform(mags, cell, p, q),
        }
    }
}

/// How the x-rows of V_g f are sampled when computing an amalgam norm.
///
/// `exact()` evaluates every x-node with a full-length row transform and
/// reproduces `mixed_norm(stft(f))`. The windowed variant visits x-nodes at a
/// coarser power-of-two stride, transforms only the window's support (finer
/// ξ-cells are traded for speed) and, for p = ∞, refines around the coarse
/// maximum with stride one. `continuous_sup` (one dimension) then searches
/// between grid nodes for the maximum of the row norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowSampling {
    pub x_spacing: Option<f64>,
    pub compact: bool,
    pub refine_sup: bool,
    pub continuous_sup: bool,
}

impl Default for RowSampling {
    fn default() -> Self {
        RowSampling::exact()
    }
}

impl RowSampling {
    pub fn exact() -> Self {
        RowSampling { x_spacing: None, compact: false, refine_sup: false, continuous_sup: false }
    }

    pub fn windowed(x_spacing: f64) -> Self {
        RowSampling { x_spacing: Some(x_spacing), compact: true, refine_sup: true, continuous_sup: true }
    }

    pub fn with_continuous_sup(mut self, on: bool) -> Self {
        self.continuous_sup = on;
        self
    }

    fn stride(&self, grid: &GridSpec) -> usize {
        match self.x_spacing {
            None => 1,
            Some(dx) => {
                let mut s = 1;
                while 2.0 * s as f64 * grid.spacing() <= dx && 2 * s <= grid.points_per_axis() / 2 {
                    s *= 2;
                }
                s
            }
        }
    }

    fn fft_len(&self, grid: &GridSpec, window: &Window) -> usize {
        let n = grid.points_per_axis();
        if !self.compact {
            return n;
        }
        let reach = (window.radius(WINDOW_EPS) / grid.spacing()).ceil() as usize;
        let m = (2 * reach + 2).next_power_of_two();
        m.min(n)
    }
}

/// Inner norms of x ↦ V_g f(x, ·) on a set of x-nodes (flat grid indices).
struct RowEngine<'a> {
    f: &'a SampledField,
    window: Window,
    inner: InnerNorm,
    m: usize,
    reach: usize,
    table: Vec<Complex64>,
    /// Lorentz step weights (c_{i+1}^{q/p} - c_i^{q/p}) by rank, with q.
    lorentz: Option<(Vec<f64>, f64)>,
    g_abs: Vec<f64>,
    f_abs: Vec<f64>,
}

impl<'a> RowEngine<'a> {
    fn new(f: &'a SampledField, window: &Window, inner: InnerNorm, sampling: &RowSampling) -> Self {
        let grid = f.grid();
        let m = sampling.fft_len(grid, window);
        let (reach, table) = window.offset_table(grid.spacing(), WINDOW_EPS);
        let g_abs = table.iter().map(|v| v.norm()).collect();
        let f_abs = f.values().iter().map(|v| v.norm()).collect();
        let mut engine = RowEngine { f, window: *window, inner, m, reach, table, lorentz: None, g_abs, f_abs };
        if let InnerNorm::Lorentz { p, q } = inner {
            if p.is_finite() && q.is_finite() {
                let e = q / p;
                let cell = engine.cell();
                let len = m.pow(grid.dim() as u32);
                let w = (0..len)
                    .map(|i| {
                        let c = i as f64 * cell;
                        if i == 0 {
                            cell.powf(e)
                        } else {
                            c.powf(e) * (e * (1.0 / i as f64).ln_1p()).exp_m1()
                        }
                    })
                    .collect();
                engine.lorentz = Some((w, q));
            }
        }
        engine
    }

    fn cell(&self) -> f64 {
        let grid = self.f.grid();
        (2.0 * PI / (self.m as f64 * grid.spacing())).powi(grid.dim() as i32)
    }

    /// Segment start along one axis for a row centred at index j.
    fn seg_start(&self, j: usize) -> i64 {
        if self.m == self.f.grid().points_per_axis() {
            0
        } else {
            j as i64 - (self.m / 2) as i64
        }
    }

    fn g_at(&self, offset: i64) -> Complex64 {
        let k = offset + self.reach as i64;
        if k < 0 || k as usize >= self.table.len() {
            Complex64::new(0.0, 0.0)
        } else {
            self.table[k as usize].conj()
        }
    }

    /// Cheap upper bound h^n Σ |g||f| used to skip negligible rows.
    fn row_bound(&self, node: usize) -> f64 {
        let grid = self.f.grid();
        let n = grid.points_per_axis() as i64;
        let vals = &self.f_abs;
        let g = &self.g_abs;
        let r = self.reach as i64;
        let mut acc = 0.0;
        match grid.dim() {
            1 => {
                let j = node as i64;
                for y in (j - r).max(0)..=(j + r).min(n - 1) {
                    acc += g[(y - j + r) as usize] * vals[y as usize];
                }
            }
            _ => {
                let (j0, j1) = ((node as i64) / n, (node as i64) % n);
                let (b0, b1) = ((j1 - r).max(0), (j1 + r).min(n - 1));
                for a in (j0 - r).max(0)..=(j0 + r).min(n - 1) {
                    let ga = g[(a - j0 + r) as usize];
                    let row = &vals[(a * n) as usize..((a + 1) * n) as usize];
                    let inner: f64 = (b0..=b1).map(|b| g[(b - j1 + r) as usize] * row[b as usize]).sum();
                    acc += ga * inner;
                }
            }
        }
        acc * grid.cell_volume()
    }

    fn row_value(&self, node: usize) -> Result<f64> {
        let grid = self.f.grid();
        let n = grid.points_per_axis() as i64;
        let m = self.m;
        let vals = self.f.values();
        let r = self.reach as i64;
        let h_n = grid.cell_volume();
        let mut mags = match grid.dim() {
            1 => {
                let j = node as i64;
                let start = self.seg_start(node);
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for y in (j - r).max(0).max(start)..=(j + r).min(n - 1).min(start + m as i64 - 1) {
                    buf[(y - start) as usize] = self.g_at(y - j) * vals[y as usize];
                }
                fft::forward(&mut buf);
                buf.iter().map(|v| v.norm_sqr().sqrt() * h_n).collect::<Vec<f64>>()
            }
            _ => {
                let (j0, j1) = ((node as i64) / n, (node as i64) % n);
                let (s0, s1) = (self.seg_start(j0 as usize), self.seg_start(j1 as usize));
                let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
                for a in (j0 - r).max(0).max(s0)..=(j0 + r).min(n - 1).min(s0 + m as i64 - 1) {
                    let ga = self.g_at(a - j0);
                    for b in (j1 - r).max(0).max(s1)..=(j1 + r).min(n - 1).min(s1 + m as i64 - 1) {
                        buf[((a - s0) as usize) * m + (b - s1) as usize] =
                            ga * self.g_at(b - j1) * vals[(a * n + b) as usize];
                    }
                }
                fft::transform_2d(&mut buf, m, false);
                buf.iter().map(|v| v.norm_sqr().sqrt() * h_n).collect::<Vec<f64>>()
            }
        };
        if let Some((w, q)) = &self.lorentz {
            // non-negative floats order like their bit patterns
            let mut bits: Vec<u64> = mags.iter().map(|a| a.to_bits()).collect();
            bits.sort_unstable();
            let mut sum = 0.0;
            for (b, wi) in bits.iter().rev().zip(w) {
                let a = f64::from_bits(*b);
                if a == 0.0 {
                    break;
                }
                sum += if *q == 2.0 { a * a } else { a.powf(*q) } * wi;
            }
            return Ok(sum.powf(1.0 / q));
        }
        self.inner.apply(&mut mags, self.cell())
    }

    /// Inner norm of the row at an arbitrary x (one dimension).
    fn row_value_at(&self, x: f64) -> Result<f64> {
        let grid = self.f.grid();
        let n = grid.points_per_axis() as i64;
        let h = grid.spacing();
        let vals = self.f.values();
        let j = (((x + grid.half_width()) / h).round() as i64).clamp(0, n - 1);
        let start = self.seg_start(j as usize);
        let r = self.reach as i64 + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        for y in (j - r).max(0).max(start)..=(j + r).min(n - 1).min(start + self.m as i64 - 1) {
            buf[(y - start) as usize] = self.window.eval(grid.coord(y as usize) - x).conj() * vals[y as usize];
        }
        fft::forward(&mut buf);
        let mut mags: Vec<f64> = buf.iter().map(|v| v.norm_sqr().sqrt() * h).collect();
        self.inner.apply(&mut mags, self.cell())
    }

    /// Golden-section search for the row-norm maximum within one cell of `x`.
    fn refine_max(&self, x: f64, best: f64) -> Result<f64> {
        let h = self.f.grid().spacing();
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (x - h, x + h);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (self.row_value_at(c)?, self.row_value_at(d)?);
        for _ in 0..48 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = self.row_value_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = self.row_value_at(d)?;
            }
        }
        Ok(best.max(fc).max(fd))
    }

    /// Inner norms on the given nodes; rows whose bound is negligible are set to 0.
    fn values(&self, nodes: &[usize]) -> Result<Vec<f64>> {
        let bounds: Vec<f64> = nodes.par_iter().map(|&k| self.row_bound(k)).collect();
        let top = bounds.iter().copied().fold(0.0, f64::max);
        let out: Result<Vec<f64>> = nodes
            .par_iter()
            .zip(bounds.par_iter())
            .map(|(&k, &b)| if b <= 1e-15 * top { Ok(0.0) } else { self.row_value(k) })
            .collect();
        out
    }
}

fn strided_nodes(grid: &GridSpec, stride: usize) -> Vec<usize> {
    let n = grid.points_per_axis();
    let axis: Vec<usize> = (0..n).step_by(stride).collect();
    match grid.dim() {
        1 => axis,
        _ => axis.iter().flat_map(|&a| axis.iter().map(move |&b| a * n + b)).collect(),
    }
}

fn neighbours(grid: &GridSpec, node: usize, radius: usize) -> Vec<usize> {
    let n = grid.points_per_axis() as i64;
    let r = radius as i64;
    let axis = |c: i64| ((c - r).max(0)..=(c + r).min(n - 1)).collect::<Vec<i64>>();
    match grid.dim() {
        1 => axis(node as i64).into_iter().map(|v| v as usize).collect(),
        _ => {
            let (a, b) = (node as i64 / n, node as i64 % n);
            let (xa, xb) = (axis(a), axis(b));
            xa.iter().flat_map(|&u| xb.iter().map(move |&v| (u * n + v) as usize)).collect()
        }
    }
}

/// General amalgam-type norm: outer L^p over x of the chosen inner norm in ξ.
pub fn amalgam_norm_general(
    f: &SampledField,
    p: f64,
    inner: InnerNorm,
    window: &Window,
    sampling: &RowSampling,
) -> Result<f64> {
    check_exponent("p", p)?;
    inner.validate()?;
    if f.domain() != Domain::Space {
        return Err(Error::InvalidArgument("amalgam norms take position-domain fields".into()));
    }
    f.require_decay()?;
    let grid = f.grid();
    let engine = RowEngine::new(f, window, inner, sampling);
    let stride = sampling.stride(grid);
    let nodes = strided_nodes(grid, stride);
    let vals = engine.values(&nodes)?;
    if p.is_infinite() {
        let mut cands: Vec<(usize, f64)> = nodes.iter().copied().zip(vals.iter().copied()).collect();
        if sampling.refine_sup && stride > 1 {
            let mut order: Vec<usize> = (0..vals.len()).collect();
            order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            let mut extra: Vec<usize> = order.iter().take(3).flat_map(|&i| neighbours(grid, nodes[i], stride)).collect();
            extra.sort_unstable();
            extra.dedup();
            let refined = engine.values(&extra)?;
            cands.extend(extra.into_iter().zip(refined));
        }
        let (arg, best) = cands.into_iter().fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if sampling.continuous_sup && grid.dim() == 1 && best > 0.0 {
            return engine.refine_max(grid.coord(arg), best);
        }
        return Ok(best);
    }
    let weight = (stride as f64 * grid.spacing()).powi(grid.dim() as i32);
    Ok(lp_of(vals.into_iter(), p, weight))
}

/// ‖f‖_{W^{p,q}} = mixed_norm(stft(f), p, q), computed row by row.
pub fn amalgam_norm(f: &SampledField, p: f64, q: f64, window: &Window) -> Result<f64> {
    amalgam_norm_general(f, p, InnerNorm::Lebesgue { q }, window, &RowSampling::exact())
}

pub fn amalgam_norm_with(f: &SampledField, p: f64, q: f64, window: &Window, sampling: &RowSampling) -> Result<f64> {
    amalgam_norm_general(f, p, InnerNorm::Lebesgue { q }, window, sampling)
}

/// Endpoint variant with inner Lorentz norm L^{p′,2}_ξ; rejects the excluded n = 1 endpoint.
pub fn amalgam_lorentz_norm(f: &SampledField, p: f64, window: &Window) -> Result<f64> {
    amalgam_lorentz_norm_with(f, p, window, &RowSampling::exact())
}

pub fn amalgam_lorentz_norm_with(f: &SampledField, p: f64, window: &Window, sampling: &RowSampling) -> Result<f64> {
    if f.grid().dim() == 1 && p.is_infinite() {
        return Err(Error::NotAdmissible { n: 1, p, r: 4.0 });
    }
    amalgam_norm_general(f, p, InnerNorm::Lorentz { p: conjugate(p), q: 2.0 }, window, sampling)
}

/// The spatial norm applied to each snapshot of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpatialNorm {
    Lebesgue { p: f64 },
    Amalgam { p: f64, inner: InnerNorm, window: Window, sampling: RowSampling },
}

impl SpatialNorm {
    /// W(ℱL^{p′}, L^p), the norm of the homogeneous estimate.
    pub fn strichartz(p: f64, sampling: RowSampling) -> Self {
        SpatialNorm::Amalgam { p, inner: InnerNorm::Lebesgue { q: conjugate(p) }, window: Window::gaussian(), sampling }
    }

    /// W(ℱL^{p′,2}, L^p), the endpoint norm.
    pub fn endpoint(p: f64, sampling: RowSampling) -> Self {
        SpatialNorm::Amalgam {
            p,
            inner: InnerNorm::Lorentz { p: conjugate(p), q: 2.0 },
            window: Window::gaussian(),
            sampling,
        }
    }

    /// W(ℱL^p, L^{p′}), the norm of the dual estimates.
    pub fn dual(p: f64, sampling: RowSampling) -> Self {
        SpatialNorm::Amalgam { p: conjugate(p), inner: InnerNorm::Lebesgue { q: p }, window: Window::gaussian(), sampling }
    }

    pub fn eval(&self, f: &SampledField) -> Result<f64> {
        match self {
            SpatialNorm::Lebesgue { p } => crate::field::lp_norm(f, *p),
            SpatialNorm::Amalgam { p, inner, window, sampling } => amalgam_norm_general(f, *p, *inner, window, sampling),
        }
    }
}

/// Outer L^ρ over a uniform time grid (trapezoid weights) of per-snapshot norms.
pub fn time_mixed_norm(trajectory: &[(f64, SampledField)], rho: f64, spatial: &SpatialNorm) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let times: Vec<f64> = trajectory.iter().map(|(t, _)| *t).collect();
    let values: Result<Vec<f64>> = trajectory.iter().map(|(_, f)| spatial.eval(f)).collect();
    time_mixed_norm_values(&times, &values?, rho)
}

/// Outer L^ρ of precomputed snapshot norms on a uniform time grid.
pub fn time_mixed_norm_values(times: &[f64], values: &[f64], rho: f64) -> Result<f64> {
    check_exponent("ρ", rho)?;
    if times.is_empty() || times.len() != values.len() {
        return Err(Error::EmptyTrajectory);
    }
    if rho.is_infinite() {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    if times.len() == 1 {
        return Ok(0.0);
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0)) {
        return Err(Error::InvalidArgument("time samples must be uniform and increasing".into()));
    }
    let last = values.len() - 1;
    let sum: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == last { 0.5 * dt } else { dt };
            w * v.powf(rho)
        })
        .sum();
    Ok(sum.powf(1.0 / rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{lp_norm, make_grid, sample, ClosedForm};
    use crate::stft::stft;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plancherel_via_mixed_norm() {
        let grid = make_grid(1, 512, 16.0).unwrap();
        let g = Window::gaussian();
        let f = g.sampled(&grid);
        let v = stft(&f, &g).unwrap();
        assert!((mixed_norm(&v, 2.0, 2.0).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-8);
        assert!((amalgam_norm(&f, 2.0, 2.0, &g).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-8);
        assert!(mixed_norm(&v, 0.5, 2.0).is_err());
    }

    #[test]
    fn separable_fubini() {
        let grid = make_grid(1, 64, 8.0).unwrap();
        let n = 64;
        let a: Vec<f64> = (0..n).map(|j| (-(grid.coord(j) - 1.0).powi(2)).exp()).collect();
        let b: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + grid.freq(k).powi(2))).collect();
        let vals = (0..n * n).map(|i| Complex64::new(a[i / n] * b[i % n], 0.0)).collect();
        let big = PhaseSpaceField::new(grid, vals).unwrap();
        for (p, q) in [(1.0, 2.0), (2.0, 1.0), (3.0, f64::INFINITY), (f64::INFINITY, 1.5)] {
            let na = lp_of(a.iter().copied(), p, grid.spacing());
            let nb = lp_of(b.iter().copied(), q, grid.dual_spacing());
            let got = mixed_norm(&big, p, q).unwrap();
            assert!((got - na * nb).abs() < 1e-10 * got, "{p} {q}");
        }
    }

    #[test]
    fn lorentz_examples() {
        let ws = WeightedSamples::new(vec![(1.0, 1.5), (1.0, 2.5)]).unwrap();
        assert!((lorentz_norm(&ws, 2.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
        // two steps: a₁=3 on measure 1, a₂=1 on measure 3 ⇒ sup_t t^{1/2} f*(t) = max(3·1, 1·2)
        let ws = WeightedSamples::new(vec![(1.0, 3.0), (3.0, 1.0)]).unwrap();
        assert!((lorentz_norm(&ws, 2.0, f64::INFINITY).unwrap() - 3.0).abs() < 1e-15);
        let ws = WeightedSamples::new(vec![(1.0, 8.0), (3.0, 1.0)]).unwrap();
        assert!((lorentz_norm(&ws, 2.0, f64::INFINITY).unwrap() - 3.0).abs() < 1e-15);
        let ws = WeightedSamples::new(vec![(2.0, 8.0), (3.0, 1.0)]).unwrap();
        assert!((lorentz_norm(&ws, 2.0, f64::INFINITY).unwrap() - 6.0).abs() < 1e-15);
        assert!(lorentz_norm(&ws, 1.0, 2.0).is_err());
        assert!(WeightedSamples::new(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn lorentz_diagonal_is_lebesgue() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = make_grid(1, 128, 8.0).unwrap();
        for _ in 0..50 {
            let vals: Vec<Complex64> =
                (0..128).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = SampledField::new(grid, vals).unwrap();
            let p = rng.gen_range(1.1..6.0);
            let ws = WeightedSamples::uniform(f.values().iter().map(|v| v.norm()), grid.spacing()).unwrap();
            let a = lorentz_norm(&ws, p, p).unwrap();
            let b = lp_norm(&f, p).unwrap();
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn lorentz_extremes() {
        let ws = WeightedSamples::new(vec![(0.0, 1.0), (0.0, 2.0)]).unwrap();
        assert_eq!(lorentz_norm(&ws, f64::INFINITY, 2.0).unwrap(), 0.0);
        let ws = WeightedSamples::new(vec![(0.5, 1.0), (2.0, 2.0)]).unwrap();
        assert_eq!(lorentz_norm(&ws, f64::INFINITY, f64::INFINITY).unwrap(), 2.0);
        assert_eq!(lorentz_norm(&ws, f64::INFINITY, 3.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn amalgam_lorentz_reduces_to_lebesgue() {
        let grid = make_grid(1, 256, 12.0).unwrap();
        let g = Window::gaussian();
        let f = sample(&grid, &ClosedForm::modulated(0.3, 0.7, 1.0)).unwrap();
        for p in [2.0, 4.0, 6.0] {
            let pp = conjugate(p);
            let a = amalgam_norm_general(&f, p, InnerNorm::Lorentz { p: pp, q: pp }, &g, &RowSampling::exact()).unwrap();
            let b = amalgam_norm(&f, p, pp, &g).unwrap();
            assert!((a - b).abs() < 1e-10 * b);
        }
        assert!(amalgam_lorentz_norm(&f, f64::INFINITY, &g).is_err());
        let z = SampledField::zeros(grid);
        assert_eq!(amalgam_lorentz_norm(&z, 4.0, &g).unwrap(), 0.0);
    }

    #[test]
    fn endpoint_norm_two_dimensions() {
        let grid = make_grid(2, 32, 6.0).unwrap();
        let f = sample(&grid, &ClosedForm::normalized(vec![0.0, 0.0], 0.9, vec![0.0, 0.0])).unwrap();
        let v = amalgam_lorentz_norm(&f, 4.0, &Window::gaussian()).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn amalgam_exact_matches_mixed_norm_of_stft() {
        let grid = make_grid(1, 256, 12.0).unwrap();
        let g = Window::gaussian();
        let f = sample(&grid, &ClosedForm::modulated(-0.4, 1.2, 2.0)).unwrap();
        let v = stft(&f, &g).unwrap();
        for (p, q) in [(f64::INFINITY, 1.0), (1.0, f64::INFINITY), (4.0, 4.0 / 3.0)] {
            let a = amalgam_norm(&f, p, q, &g).unwrap();
            let b = mixed_norm(&v, p, q).unwrap();
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn windowed_rows_agree_with_exact() {
        let grid = make_grid(1, 2048, 24.0).unwrap();
        let g = Window::gaussian();
        let f = sample(&grid, &ClosedForm::modulated(0.2, 0.3, 3.0)).unwrap();
        let exact = RowSampling::exact().with_continuous_sup(true);
        for (p, q) in [(f64::INFINITY, 1.0), (4.0, 4.0 / 3.0), (2.0, 2.0)] {
            let a = amalgam_norm_with(&f, p, q, &g, &exact).unwrap();
            let b = amalgam_norm_with(&f, p, q, &g, &RowSampling::windowed(0.25)).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "{p} {q}: {a} {b}");
        }
    }

    #[test]
    fn continuous_sup_off_grid_closed_form() {
        // ‖u‖_{W^{∞,1}} = 2π^{3/4}(Re a/π)^{1/4}|c|^{1/2}/(Re c)^{1/2}, c = 1/(1+a), for u ∝ e^{-a(y-y₀)²/2}
        let grid = make_grid(1, 1024, 16.0).unwrap();
        let g = Window::gaussian();
        let sigma = 0.4;
        let f = sample(&grid, &ClosedForm::normalized(vec![0.0371], sigma, vec![0.0])).unwrap();
        let a = 1.0 / (sigma * sigma);
        let c = 1.0 / (1.0 + a);
        let exact = 2.0 * PI.powf(0.75) * (a / PI).powf(0.25) * c.sqrt() / c.sqrt();
        let refined = amalgam_norm_with(&f, f64::INFINITY, 1.0, &g, &RowSampling::exact().with_continuous_sup(true)).unwrap();
        let nodes = amalgam_norm(&f, f64::INFINITY, 1.0, &g).unwrap();
        assert!((refined - exact).abs() < 1e-10 * exact, "{refined} {exact}");
        assert!(nodes < refined);
    }

    #[test]
    fn narrow_gaussian_has_larger_w_inf_1() {
        let grid = make_grid(1, 1024, 16.0).unwrap();
        let g = Window::gaussian();
        let narrow = sample(&grid, &ClosedForm::normalized(vec![0.0], 0.3, vec![0.0])).unwrap();
        let wide = sample(&grid, &ClosedForm::normalized(vec![0.0], 2.0, vec![0.0])).unwrap();
        let a = amalgam_norm(&narrow, f64::INFINITY, 1.0, &g).unwrap();
        let b = amalgam_norm(&wide, f64::INFINITY, 1.0, &g).unwrap();
        assert!(a > b);
    }

    #[test]
    fn time_norm_examples() {
        let t: Vec<f64> = (0..=64).map(|i| -0.5 + i as f64 / 64.0).collect();
        let ones = vec![1.0; t.len()];
        for rho in [1.0, 2.0, 4.0] {
            assert!((time_mixed_norm_values(&t, &ones, rho).unwrap() - 1f64.powf(1.0 / rho)).abs() < 1e-14);
        }
        let vals: Vec<f64> = t.iter().map(|s| 1.0 + s * s).collect();
        assert_eq!(time_mixed_norm_values(&t, &vals, f64::INFINITY).unwrap(), 1.25);
        assert!(time_mixed_norm(&[], 2.0, &SpatialNorm::Lebesgue { p: 2.0 }).is_err());
    }
}
